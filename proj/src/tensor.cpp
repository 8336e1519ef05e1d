#include "dsf/tensor.hpp"

#include "dsf/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace dsf {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<ad::Node>;

void check_shape(const Shape& shape) {
    for (int d : shape)
        if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
}

NodePtr make_leaf(Shape shape, std::vector<Real> value) {
    check_shape(shape);
    if (shape_numel(shape) != value.size())
        throw DimensionError("shape " + shape_str(shape) + " does not match " +
                             std::to_string(value.size()) + " values");
    auto n = std::make_shared<ad::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    return n;
}

// Builds an op result. The backward closure is only kept when recording is on
// and at least one input carries a gradient.
Tensor make_result(Shape shape, std::vector<Real> value, std::vector<NodePtr> inputs,
                   std::function<void(ad::Node&)> backward) {
    auto n = make_leaf(std::move(shape), std::move(value));
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& in : inputs) any = any || in->requires_grad;
        if (any) {
            n->requires_grad = true;
            n->inputs = std::move(inputs);
            n->backward = std::move(backward);
        }
    }
    return Tensor(std::move(n));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

void require_rank(const Tensor& t, std::size_t r, const char* op) {
    if (t.rank() != r)
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) +
                             ", got " + shape_str(t.shape()));
}

// Register-tiled kernel for C[M x N] += op(A) * B[K x N], where op(A)(i, k) is
// A[i * a_row + k * a_col]. Every output element is accumulated over k in
// ascending order and then added to C once, so the result does not depend on
// the tiling. Uses the GCC/Clang vector extension for the 2 x 32-byte column tile.
typedef Real VecR __attribute__((vector_size(32)));
constexpr int kVecLanes = static_cast<int>(32 / sizeof(Real));
constexpr int kTileN = 2 * kVecLanes;

template <int TM>
void gemm_block(int i0, int j0, int N, int K, const Real* A, std::size_t a_row, std::size_t a_col,
                const Real* B, Real* C) {
    VecR acc[TM][2] = {};
    for (int k = 0; k < K; ++k) {
        const Real* b = B + static_cast<std::size_t>(k) * N + j0;
        VecR b0, b1;
        std::memcpy(&b0, b, sizeof(VecR));
        std::memcpy(&b1, b + kVecLanes, sizeof(VecR));
        for (int r = 0; r < TM; ++r) {
            const Real av = A[(i0 + r) * a_row + k * a_col];
            acc[r][0] += av * b0;
            acc[r][1] += av * b1;
        }
    }
    for (int r = 0; r < TM; ++r) {
        Real* c = C + static_cast<std::size_t>(i0 + r) * N + j0;
        for (int q = 0; q < kVecLanes; ++q) {
            c[q] += acc[r][0][q];
            c[kVecLanes + q] += acc[r][1][q];
        }
    }
}

void gemm_tiled(int M, int N, int K, const Real* A, std::size_t a_row, std::size_t a_col,
                const Real* B, Real* C) {
    const int n_full = N - N % kTileN;
    int i0 = 0;
    for (; i0 + 4 <= M; i0 += 4)
        for (int j0 = 0; j0 < n_full; j0 += kTileN) gemm_block<4>(i0, j0, N, K, A, a_row, a_col, B, C);
    for (; i0 < M; ++i0)
        for (int j0 = 0; j0 < n_full; j0 += kTileN) gemm_block<1>(i0, j0, N, K, A, a_row, a_col, B, C);
    if (n_full == N) return;
    for (int i = 0; i < M; ++i)
        for (int j = n_full; j < N; ++j) {
            Real acc = 0;
            for (int k = 0; k < K; ++k)
                acc += A[i * a_row + k * a_col] * B[static_cast<std::size_t>(k) * N + j];
            C[static_cast<std::size_t>(i) * N + j] += acc;
        }
}

// C[M x N] += A[M x K] * B[K x N]
void gemm_nn(int M, int N, int K, const Real* A, const Real* B, Real* C) {
    gemm_tiled(M, N, K, A, static_cast<std::size_t>(K), 1, B, C);
}

// C[M x N] += A[K x M]^T * B[K x N]
void gemm_tn(int M, int N, int K, const Real* A, const Real* B, Real* C) {
    gemm_tiled(M, N, K, A, 1, static_cast<std::size_t>(M), B, C);
}

// C[M x N] += A[M x K] * B[N x K]^T
void gemm_nt(int M, int N, int K, const Real* A, const Real* B, Real* C) {
    if (M >= 4) {
        // Transposing B costs N*K, against M*N*K for the product.
        std::vector<Real> bt(static_cast<std::size_t>(K) * N);
        for (int j = 0; j < N; ++j)
            for (int k = 0; k < K; ++k)
                bt[static_cast<std::size_t>(k) * N + j] = B[static_cast<std::size_t>(j) * K + k];
        gemm_nn(M, N, K, A, bt.data(), C);
        return;
    }
    constexpr int kLanes = 8;
    for (int i = 0; i < M; ++i) {
        const Real* a = A + static_cast<std::size_t>(i) * K;
        for (int j = 0; j < N; ++j) {
            const Real* b = B + static_cast<std::size_t>(j) * K;
            Real lanes[kLanes] = {};
            int k = 0;
            for (; k + kLanes <= K; k += kLanes)
                for (int l = 0; l < kLanes; ++l) lanes[l] += a[k + l] * b[k + l];
            Real s = 0;
            for (; k < K; ++k) s += a[k] * b[k];
            for (int l = 0; l < kLanes; ++l) s += lanes[l];
            C[static_cast<std::size_t>(i) * N + j] += s;
        }
    }
}

struct ConvGeom {
    int cin, h, w, cout, kh, kw, stride, pad, ho, wo;
    int K() const { return cin * kh * kw; }
    int P() const { return ho * wo; }
    bool trivial() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const ConvGeom& g, const Real* x, Real* cols) {
    const int P = g.P();
    for (int c = 0; c < g.cin; ++c)
        for (int i = 0; i < g.kh; ++i)
            for (int j = 0; j < g.kw; ++j) {
                Real* row = cols + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * P;
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int y = oy * g.stride - g.pad + i;
                    Real* dst = row + oy * g.wo;
                    if (y < 0 || y >= g.h) {
                        std::fill(dst, dst + g.wo, Real(0));
                        continue;
                    }
                    const Real* src = x + (static_cast<std::size_t>(c) * g.h + y) * g.w;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int xx = ox * g.stride - g.pad + j;
                        dst[ox] = (xx >= 0 && xx < g.w) ? src[xx] : Real(0);
                    }
                }
            }
}

void col2im(const ConvGeom& g, const Real* cols, Real* dx) {
    const int P = g.P();
    for (int c = 0; c < g.cin; ++c)
        for (int i = 0; i < g.kh; ++i)
            for (int j = 0; j < g.kw; ++j) {
                const Real* row = cols + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * P;
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int y = oy * g.stride - g.pad + i;
                    if (y < 0 || y >= g.h) continue;
                    Real* dst = dx + (static_cast<std::size_t>(c) * g.h + y) * g.w;
                    const Real* src = row + oy * g.wo;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int xx = ox * g.stride - g.pad + j;
                        if (xx >= 0 && xx < g.w) dst[xx] += src[ox];
                    }
                }
            }
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd f, Deriv df) {
    const auto& xv = x.data();
    std::vector<Real> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    auto xn = x.node();
    return make_result(x.shape(), std::move(out), {xn}, [xn, df](ad::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            xn->grad[i] += self.grad[i] * df(xn->value[i], self.value[i]);
    });
}

Real stable_sigmoid(Real x) {
    if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

} // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---------------------------------------------------------------------------
// Tensor handle

Tensor Tensor::zeros(const Shape& shape) { return full(shape, Real(0)); }

Tensor Tensor::full(const Shape& shape, Real v) {
    check_shape(shape);
    return Tensor(make_leaf(shape, std::vector<Real>(shape_numel(shape), v)));
}

Tensor Tensor::from(const Shape& shape, std::vector<Real> values) {
    return Tensor(make_leaf(shape, std::move(values)));
}

const Shape& Tensor::shape() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->shape;
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const Real> Tensor::data() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->value;
}

std::span<Real> Tensor::mutable_data() {
    if (!node_) throw ContractError("use of undefined tensor");
    if (node_->backward) throw ContractError("in-place modification of a non-leaf tensor");
    return node_->value;
}

Real Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (!is_leaf()) throw ContractError("requires_grad can only be set on leaves");
    node_->requires_grad = on;
    return *this;
}

bool Tensor::is_leaf() const { return node_ && !node_->backward; }

bool Tensor::frozen() const { return node_ && node_->frozen; }
void Tensor::set_frozen(bool on) {
    if (!node_) throw ContractError("use of undefined tensor");
    node_->frozen = on;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const Real> Tensor::grad() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
    return Tensor(make_leaf(shape(), node_->value));
}

void Tensor::backward() const {
    if (!node_) throw ContractError("backward on undefined tensor");
    if (numel() != 1)
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<ad::Node*> order;
    std::unordered_set<ad::Node*> seen;
    std::vector<std::pair<ad::Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->inputs.size()) {
            ad::Node* child = n->inputs[idx++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (ad::Node* n : order)
        if (n->backward) n->grad.clear();
    node_->ensure_grad();
    node_->grad[0] += Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        ad::Node* n = *it;
        if (!n->backward) continue;
        if (n->grad.empty()) continue;
        n->backward(*n);
        n->grad.clear();
        n->grad.shrink_to_fit();
    }
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const auto av = a.data(), bv = b.data();
    std::vector<Real> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node();
    return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](ad::Node& self) {
        for (auto* in : {an.get(), bn.get()}) {
            if (!in->requires_grad) continue;
            in->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    const auto av = a.data(), bv = b.data();
    std::vector<Real> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    auto an = a.node(), bn = b.node();
    return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](ad::Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const auto av = a.data(), bv = b.data();
    std::vector<Real> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto an = a.node(), bn = b.node();
    return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](ad::Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                bn->grad[i] += self.grad[i] * an->value[i];
        }
    });
}

Tensor scale(const Tensor& a, Real s) {
    return unary(a, [s](Real x) { return x * s; }, [s](Real, Real) { return s; });
}

Tensor add_scalar(const Tensor& a, Real s) {
    return unary(a, [s](Real x) { return x + s; }, [](Real, Real) { return Real(1); });
}

Tensor neg(const Tensor& a) { return scale(a, Real(-1)); }

Tensor activation(const Tensor& x, Activation kind) {
    switch (kind) {
    case Activation::relu:
        return unary(
            x, [](Real v) { return v > 0 ? v : Real(0); },
            [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
    case Activation::silu:
        return unary(
            x, [](Real v) { return v * stable_sigmoid(v); },
            [](Real v, Real) {
                const Real s = stable_sigmoid(v);
                return s * (Real(1) + v * (Real(1) - s));
            });
    case Activation::sigmoid:
        return unary(
            x, [](Real v) { return stable_sigmoid(v); },
            [](Real, Real y) { return y * (Real(1) - y); });
    case Activation::tanh:
        return unary(
            x, [](Real v) { return std::tanh(v); }, [](Real, Real y) { return Real(1) - y * y; });
    }
    throw ArgumentError("unknown activation");
}

Tensor log_sigmoid(const Tensor& x) {
    // log(sigmoid(v)) = -softplus(-v); derivative is sigmoid(-v).
    return unary(
        x,
        [](Real v) {
            return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
        },
        [](Real v, Real) { return stable_sigmoid(-v); });
}

Tensor log_softmax(const Tensor& x) {
    require_rank(x, 1, "log_softmax");
    const auto xv = x.data();
    const Real mx = *std::max_element(xv.begin(), xv.end());
    Real z = 0;
    for (Real v : xv) z += std::exp(v - mx);
    const Real lse = mx + std::log(z);
    std::vector<Real> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] - lse;
    auto xn = x.node();
    return make_result(x.shape(), std::move(out), {xn}, [xn](ad::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        // d/dx_i = g_i - softmax_i * sum_j g_j
        Real gsum = 0;
        for (Real g : self.grad) gsum += g;
        for (std::size_t i = 0; i < self.value.size(); ++i)
            xn->grad[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
    });
}

Tensor clamp(const Tensor& x, Real lo, Real hi) {
    if (lo > hi) throw ArgumentError("clamp: lo > hi");
    return unary(
        x, [lo, hi](Real v) { return std::clamp(v, lo, hi); },
        [lo, hi](Real v, Real) { return (v >= lo && v <= hi) ? Real(1) : Real(0); });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    std::vector<Real> out(static_cast<std::size_t>(m) * n, Real(0));
    gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
    auto an = a.node(), bn = b.node();
    return make_result({m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](ad::Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            gemm_nt(m, k, n, self.grad.data(), bn->value.data(), an->grad.data());
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            gemm_tn(k, n, m, an->value.data(), self.grad.data(), bn->grad.data());
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(weight, 2, "linear");
    const int n = weight.dim(0), k = weight.dim(1);
    if (x.numel() != static_cast<std::size_t>(k))
        throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                             shape_str(weight.shape()));
    if (bias.numel() != static_cast<std::size_t>(n))
        throw DimensionError("linear: bias " + shape_str(bias.shape()));
    std::vector<Real> out(bias.data().begin(), bias.data().end());
    gemm_nt(1, n, k, x.data().data(), weight.data().data(), out.data());
    auto xn = x.node(), wn = weight.node(), bn = bias.node();
    return make_result({n}, std::move(out), {xn, wn, bn}, [xn, wn, bn, n, k](ad::Node& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            gemm_nn(1, k, n, self.grad.data(), wn->value.data(), xn->grad.data());
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            gemm_tn(n, k, 1, self.grad.data(), xn->value.data(), wn->grad.data());
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int i = 0; i < n; ++i) bn->grad[i] += self.grad[i];
        }
    });
}

namespace {

Tensor conv2d_impl(const Tensor& input, const Tensor& kernel, const Tensor* bias, int stride,
                   int pad) {
    require_rank(input, 3, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
    if (pad < 0) throw ArgumentError("conv2d: pad must be >= 0");
    ConvGeom g{};
    g.cin = input.dim(0);
    g.h = input.dim(1);
    g.w = input.dim(2);
    g.cout = kernel.dim(0);
    g.kh = kernel.dim(2);
    g.kw = kernel.dim(3);
    g.stride = stride;
    g.pad = pad;
    if (kernel.dim(1) != g.cin)
        throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " vs input " +
                             shape_str(input.shape()));
    const int hspan = g.h + 2 * pad - g.kh, wspan = g.w + 2 * pad - g.kw;
    if (hspan < 0 || wspan < 0)
        throw DimensionError("conv2d: kernel larger than padded input");
    g.ho = hspan / stride + 1;
    g.wo = wspan / stride + 1;
    if (bias && bias->numel() != static_cast<std::size_t>(g.cout))
        throw DimensionError("conv2d: bias " + shape_str(bias->shape()));

    const int K = g.K(), P = g.P();
    std::shared_ptr<std::vector<Real>> cols;
    const Real* colp = input.data().data();
    if (!g.trivial()) {
        cols = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(K) * P);
        im2col(g, input.data().data(), cols->data());
        colp = cols->data();
    }
    std::vector<Real> out(static_cast<std::size_t>(g.cout) * P, Real(0));
    if (bias) {
        const auto bv = bias->data();
        for (int c = 0; c < g.cout; ++c)
            std::fill(out.begin() + static_cast<std::ptrdiff_t>(c) * P,
                      out.begin() + static_cast<std::ptrdiff_t>(c + 1) * P, bv[c]);
    }
    gemm_nn(g.cout, P, K, kernel.data().data(), colp, out.data());

    auto xn = input.node(), wn = kernel.node();
    auto bn = bias ? bias->node() : nullptr;
    std::vector<NodePtr> inputs{xn, wn};
    if (bn) inputs.push_back(bn);
    return make_result(
        {g.cout, g.ho, g.wo}, std::move(out), std::move(inputs),
        [g, xn, wn, bn, cols](ad::Node& self) {
            const int K = g.K(), P = g.P();
            const Real* colp = cols ? cols->data() : xn->value.data();
            if (wn->requires_grad) {
                wn->ensure_grad();
                gemm_nt(g.cout, K, P, self.grad.data(), colp, wn->grad.data());
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                for (int c = 0; c < g.cout; ++c) {
                    Real s = 0;
                    const Real* gr = self.grad.data() + static_cast<std::size_t>(c) * P;
                    for (int p = 0; p < P; ++p) s += gr[p];
                    bn->grad[c] += s;
                }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                if (g.trivial()) {
                    gemm_tn(K, P, g.cout, wn->value.data(), self.grad.data(), xn->grad.data());
                } else {
                    std::vector<Real> dcols(static_cast<std::size_t>(K) * P, Real(0));
                    gemm_tn(K, P, g.cout, wn->value.data(), self.grad.data(), dcols.data());
                    col2im(g, dcols.data(), xn->grad.data());
                }
            }
        });
}

} // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad) {
    return conv2d_impl(input, kernel, nullptr, stride, pad);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int pad) {
    return conv2d_impl(input, kernel, &bias, stride, pad);
}

Tensor upsample2d(const Tensor& input, int factor) {
    if (factor < 1) throw ArgumentError("upsample2d: factor must be >= 1");
    require_rank(input, 3, "upsample2d");
    if (factor == 1) return input;
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int Ho = H * factor, Wo = W * factor;
    const auto xv = input.data();
    std::vector<Real> out(static_cast<std::size_t>(C) * Ho * Wo);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < Ho; ++y)
            for (int x = 0; x < Wo; ++x)
                out[(static_cast<std::size_t>(c) * Ho + y) * Wo + x] =
                    xv[(static_cast<std::size_t>(c) * H + y / factor) * W + x / factor];
    auto xn = input.node();
    return make_result({C, Ho, Wo}, std::move(out), {xn}, [xn, C, H, W, factor](ad::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const int Ho = H * factor, Wo = W * factor;
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < Ho; ++y)
                for (int x = 0; x < Wo; ++x)
                    xn->grad[(static_cast<std::size_t>(c) * H + y / factor) * W + x / factor] +=
                        self.grad[(static_cast<std::size_t>(c) * Ho + y) * Wo + x];
    });
}

// ---------------------------------------------------------------------------
// Normalization and channel ops

Tensor group_norm(const Tensor& input, int groups, const Tensor& gamma, const Tensor& beta,
                  Real eps) {
    require_rank(input, 3, "group_norm");
    const int C = input.dim(0);
    if (groups < 1 || C % groups != 0)
        throw ArgumentError("group_norm: " + std::to_string(C) + " channels not divisible by " +
                            std::to_string(groups) + " groups");
    if (gamma.numel() != static_cast<std::size_t>(C) || beta.numel() != static_cast<std::size_t>(C))
        throw DimensionError("group_norm: affine parameters must have " + std::to_string(C) +
                             " elements");
    const std::size_t HW = static_cast<std::size_t>(input.dim(1)) * input.dim(2);
    const std::size_t cpg = static_cast<std::size_t>(C / groups);
    const std::size_t gsize = cpg * HW;
    const auto xv = input.data(), gv = gamma.data(), bv = beta.data();

    auto xhat = std::make_shared<std::vector<Real>>(xv.size());
    auto inv_std = std::make_shared<std::vector<Real>>(groups);
    std::vector<Real> out(xv.size());
    for (int gi = 0; gi < groups; ++gi) {
        const std::size_t base = gi * gsize;
        Real m = 0;
        for (std::size_t i = 0; i < gsize; ++i) m += xv[base + i];
        m /= static_cast<Real>(gsize);
        Real var = 0;
        for (std::size_t i = 0; i < gsize; ++i) {
            const Real d = xv[base + i] - m;
            var += d * d;
        }
        var /= static_cast<Real>(gsize);
        const Real is = Real(1) / std::sqrt(var + eps);
        (*inv_std)[gi] = is;
        for (std::size_t i = 0; i < gsize; ++i) {
            const std::size_t idx = base + i;
            const std::size_t c = idx / HW;
            (*xhat)[idx] = (xv[idx] - m) * is;
            out[idx] = (*xhat)[idx] * gv[c] + bv[c];
        }
    }
    auto xn = input.node(), gn = gamma.node(), bn = beta.node();
    return make_result(
        input.shape(), std::move(out), {xn, gn, bn},
        [xn, gn, bn, xhat, inv_std, groups, HW, gsize](ad::Node& self) {
            const std::size_t C = self.shape[0];
            if (gn->requires_grad || bn->requires_grad) {
                if (gn->requires_grad) gn->ensure_grad();
                if (bn->requires_grad) bn->ensure_grad();
                for (std::size_t c = 0; c < C; ++c) {
                    Real sg = 0, sb = 0;
                    for (std::size_t p = 0; p < HW; ++p) {
                        const std::size_t idx = c * HW + p;
                        sg += self.grad[idx] * (*xhat)[idx];
                        sb += self.grad[idx];
                    }
                    if (gn->requires_grad) gn->grad[c] += sg;
                    if (bn->requires_grad) bn->grad[c] += sb;
                }
            }
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const Real n = static_cast<Real>(gsize);
            for (int gi = 0; gi < groups; ++gi) {
                const std::size_t base = gi * gsize;
                // dxhat = dy * gamma; dx = inv_std * (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                Real s1 = 0, s2 = 0;
                for (std::size_t i = 0; i < gsize; ++i) {
                    const std::size_t idx = base + i;
                    const Real d = self.grad[idx] * gn->value[idx / HW];
                    s1 += d;
                    s2 += d * (*xhat)[idx];
                }
                s1 /= n;
                s2 /= n;
                const Real is = (*inv_std)[gi];
                for (std::size_t i = 0; i < gsize; ++i) {
                    const std::size_t idx = base + i;
                    const Real d = self.grad[idx] * gn->value[idx / HW];
                    xn->grad[idx] += is * (d - s1 - (*xhat)[idx] * s2);
                }
            }
        });
}

Tensor film(const Tensor& x, const Tensor& scale_t, const Tensor& shift) {
    require_rank(x, 3, "film");
    const std::size_t C = x.dim(0);
    if (scale_t.numel() != C || shift.numel() != C)
        throw DimensionError("film: modulation must have " + std::to_string(C) + " elements");
    const std::size_t HW = x.numel() / C;
    const auto xv = x.data(), sv = scale_t.data(), tv = shift.data();
    std::vector<Real> out(xv.size());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < HW; ++p)
            out[c * HW + p] = xv[c * HW + p] * (Real(1) + sv[c]) + tv[c];
    auto xn = x.node(), sn = scale_t.node(), tn = shift.node();
    return make_result(x.shape(), std::move(out), {xn, sn, tn}, [xn, sn, tn, C, HW](ad::Node& self) {
        if (xn->requires_grad) xn->ensure_grad();
        if (sn->requires_grad) sn->ensure_grad();
        if (tn->requires_grad) tn->ensure_grad();
        for (std::size_t c = 0; c < C; ++c) {
            Real ds = 0, dt = 0;
            const Real k = Real(1) + sn->value[c];
            for (std::size_t p = 0; p < HW; ++p) {
                const std::size_t idx = c * HW + p;
                const Real g = self.grad[idx];
                ds += g * xn->value[idx];
                dt += g;
                if (xn->requires_grad) xn->grad[idx] += g * k;
            }
            if (sn->requires_grad) sn->grad[c] += ds;
            if (tn->requires_grad) tn->grad[c] += dt;
        }
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_rank(a, 3, "concat_channels");
    require_rank(b, 3, "concat_channels");
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        throw DimensionError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<Real> out;
    out.reserve(a.numel() + b.numel());
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    auto an = a.node(), bn = b.node();
    const std::size_t na = a.numel();
    return make_result({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(out), {an, bn},
                       [an, bn, na](ad::Node& self) {
                           if (an->requires_grad) {
                               an->ensure_grad();
                               for (std::size_t i = 0; i < na; ++i) an->grad[i] += self.grad[i];
                           }
                           if (bn->requires_grad) {
                               bn->ensure_grad();
                               for (std::size_t i = 0; i < bn->grad.size(); ++i)
                                   bn->grad[i] += self.grad[na + i];
                           }
                       });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
    check_shape(shape);
    if (shape_numel(shape) != x.numel())
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    std::vector<Real> out(x.data().begin(), x.data().end());
    auto xn = x.node();
    return make_result(shape, std::move(out), {xn}, [xn](ad::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
    });
}

Tensor slice(const Tensor& x, std::size_t offset, std::size_t length) {
    if (length == 0 || offset + length > x.numel())
        throw DimensionError("slice: range out of bounds for " + shape_str(x.shape()));
    const auto xv = x.data();
    std::vector<Real> out(xv.begin() + static_cast<std::ptrdiff_t>(offset),
                          xv.begin() + static_cast<std::ptrdiff_t>(offset + length));
    auto xn = x.node();
    return make_result({static_cast<int>(length)}, std::move(out), {xn}, [xn, offset](ad::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[offset + i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
    Real s = 0;
    for (Real v : x.data()) s += v;
    auto xn = x.node();
    return make_result({1}, {s}, {xn}, [xn](ad::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const Real g = self.grad[0];
        for (auto& v : xn->grad) v += g;
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), Real(1) / static_cast<Real>(x.numel())); }

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    const auto av = a.data(), bv = b.data();
    const std::size_t n = av.size();
    Real s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Real d = av[i] - bv[i];
        s += d * d;
    }
    s /= static_cast<Real>(n);
    auto an = a.node(), bn = b.node();
    return make_result({1}, {s}, {an, bn}, [an, bn, n](ad::Node& self) {
        const Real k = Real(2) * self.grad[0] / static_cast<Real>(n);
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            const Real d = k * (an->value[i] - bn->value[i]);
            if (an->requires_grad) an->grad[i] += d;
            if (bn->requires_grad) bn->grad[i] -= d;
        }
    });
}

Tensor sum_all(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ArgumentError("sum_all: empty list");
    Tensor acc = xs.front();
    for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
    return acc;
}

} // namespace dsf
