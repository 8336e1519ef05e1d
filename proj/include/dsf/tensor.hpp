#pragma once

// Dense tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle to a shared node. Forward ops produce new nodes
// and, when any input requires a gradient, record a backward closure that
// pushes the node's gradient into its inputs. `backward()` on a scalar
// visits the recorded graph in reverse topological order.
//
// Reductions run in a fixed row-major order, so results are bit-identical
// for identical inputs.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dsf {

#ifdef DSF_FLOAT32
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace ad {

struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad; // empty until a gradient arrives
    bool requires_grad = false;
    bool frozen = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), Real(0));
    }
};

} // namespace ad

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, Real v);
    static Tensor from(const Shape& shape, std::vector<Real> values);
    static Tensor scalar(Real v) { return from({1}, {v}); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    int dim(std::size_t i) const { return shape().at(i); }
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;

    std::span<const Real> data() const;
    /// Writable view; only leaves may be modified in place.
    std::span<Real> mutable_data();
    Real item() const;
    Real operator[](std::size_t i) const { return data()[i]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on = true);
    bool is_leaf() const;

    bool frozen() const;
    void set_frozen(bool on);

    bool has_grad() const;
    std::span<const Real> grad() const;
    void zero_grad();

    /// Copy of the value as a new leaf without history.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    /// Accumulates d(this)/d(leaf) into every requires_grad leaf.
    /// Throws ContractError unless this is a single-element tensor.
    void backward() const;

    const std::shared_ptr<ad::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<ad::Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<ad::Node> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

enum class Activation { relu, silu, sigmoid, tanh };

// Elementwise arithmetic; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real s);
Tensor add_scalar(const Tensor& a, Real s);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, Real s) { return scale(a, s); }
inline Tensor operator*(Real s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

Tensor matmul(const Tensor& a, const Tensor& b);
/// y = W x + b for a vector x[k], W[n x k], b[n].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Cross-correlation of input[C_in x H x W] with kernel[C_out x C_in x kh x kw].
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad);
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int pad);
/// Nearest-neighbour upsampling of [C x H x W] by an integer factor.
Tensor upsample2d(const Tensor& input, int factor);

Tensor activation(const Tensor& input, Activation kind);
inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }
inline Tensor silu(const Tensor& x) { return activation(x, Activation::silu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }
inline Tensor tanh(const Tensor& x) { return activation(x, Activation::tanh); }
/// log(sigmoid(x)), numerically stable.
Tensor log_sigmoid(const Tensor& x);
/// Log-probabilities of a 1-D vector of logits.
Tensor log_softmax(const Tensor& x);
/// Clamps values into [lo, hi]; gradient is zero outside the interval.
Tensor clamp(const Tensor& x, Real lo, Real hi);

inline constexpr Real kNormEpsilon = Real(1e-5);

Tensor group_norm(const Tensor& input, int groups, const Tensor& gamma, const Tensor& beta,
                  Real eps = kNormEpsilon);
/// x * (1 + scale[c]) + shift[c] over [C x H x W].
Tensor film(const Tensor& x, const Tensor& scale, const Tensor& shift);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, const Shape& shape);
/// Contiguous sub-range of the flattened tensor, returned as a 1-D tensor.
Tensor slice(const Tensor& x, std::size_t offset, std::size_t length);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean of squared elementwise differences.
Tensor mse(const Tensor& a, const Tensor& b);

/// Sum of a list of scalars, in list order.
Tensor sum_all(const std::vector<Tensor>& xs);

} // namespace dsf
