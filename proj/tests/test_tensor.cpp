#include "dsf/error.hpp"
#include "dsf/tensor.hpp"
#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dsf;
using dsf::testing::gradcheck;
using dsf::testing::random_tensor;

namespace {

Tensor identity(int n) {
    Tensor t = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i) t.mutable_data()[i * n + i] = 1;
    return t;
}

// Weighted sum with fixed pseudo-random weights, so gradients of every
// output element differ.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
    return sum(mul(y, random_tensor(y.shape(), seed)));
}

} // namespace

TEST(Tensor, ConstructionChecksShape) {
    EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
    Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(shape_numel(t.shape()), t.data().size());
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    const Tensor x = random_tensor({3, 5}, 1);
    const Tensor y = matmul(identity(3), x);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Matmul, ZerosAnnihilate) {
    const Tensor y = matmul(random_tensor({4, 3}, 2), Tensor::zeros({3, 2}));
    for (Real v : y.data()) EXPECT_EQ(v, 0);
}

TEST(Matmul, MatchesTripleLoop) {
    for (auto [m, k, n] : {std::tuple{4, 3, 2}, std::tuple{7, 13, 9}, std::tuple{1, 17, 33}, std::tuple{33, 5, 1}}) {
        const Tensor a = random_tensor({m, k}, 3), b = random_tensor({k, n}, 4);
        const Tensor c = matmul(a, b);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                double s = 0;
                for (int q = 0; q < k; ++q) s += a[i * k + q] * b[q * n + j];
                EXPECT_NEAR(c[i * n + j], s, 1e-10);
            }
    }
}

TEST(Matmul, InnerMismatchThrows) {
    EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
    Tensor a = random_tensor({5, 4}, 5), b = random_tensor({4, 6}, 6);
    EXPECT_LT(gradcheck([&] { return probe(matmul(a, b)); }, {a, b}).max_rel_error, 1e-6);
}

TEST(Conv2d, UnitKernelIsIdentity) {
    const Tensor x = random_tensor({1, 4, 5}, 7);
    const Tensor y = conv2d(x, Tensor::full({1, 1, 1, 1}, 1), 1, 0);
    ASSERT_EQ(y.shape(), x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, OnesKernelGivesWindowSums) {
    const Tensor x = Tensor::from({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor y = conv2d(x, Tensor::full({1, 1, 2, 2}, 1), 1, 0);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double s = 0;
            for (int di = 0; di < 2; ++di)
                for (int dj = 0; dj < 2; ++dj) s += x[(i + di) * 3 + j + dj];
            EXPECT_EQ(y[i * 2 + j], s);
        }
}

TEST(Conv2d, ZeroKernelGivesZeros) {
    const Tensor y = conv2d(random_tensor({2, 6, 6}, 8), Tensor::zeros({3, 2, 3, 3}), 2, 1);
    EXPECT_EQ(y.shape(), (Shape{3, 3, 3}));
    for (Real v : y.data()) EXPECT_EQ(v, 0);
}

TEST(Conv2d, OutputSizeFormula) {
    for (int stride : {1, 2, 3})
        for (int pad : {0, 1, 2}) {
            const Tensor y = conv2d(Tensor::zeros({1, 7, 9}), Tensor::zeros({2, 1, 3, 3}), stride, pad);
            EXPECT_EQ(y.dim(1), (7 + 2 * pad - 3) / stride + 1);
            EXPECT_EQ(y.dim(2), (9 + 2 * pad - 3) / stride + 1);
        }
}

TEST(Conv2d, RejectsNonPositiveOutput) {
    EXPECT_THROW(conv2d(Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), 1, 0), DimensionError);
    EXPECT_THROW(conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 2, 3, 3}), 1, 0), DimensionError);
}

TEST(Conv2d, RejectsZeroStride) {
    EXPECT_THROW(conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), 0, 0), ArgumentError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
    Tensor x = random_tensor({3, 7, 6}, 9), k = random_tensor({4, 3, 3, 3}, 10), b = random_tensor({4}, 11);
    for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{2, 0}}) {
        const auto r = gradcheck([&] { return probe(conv2d(x, k, b, stride, pad)); }, {x, k, b});
        EXPECT_LT(r.max_rel_error, 1e-6) << "stride " << stride << " pad " << pad;
    }
}

TEST(Upsample, FactorOneIsIdentity) {
    const Tensor x = random_tensor({2, 3, 4}, 12);
    const Tensor y = upsample2d(x, 1);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Upsample, ReplicatesPixel) {
    const Tensor y = upsample2d(Tensor::from({1, 1, 1}, {7}), 2);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
    for (Real v : y.data()) EXPECT_EQ(v, 7);
}

TEST(Upsample, SumGradientIsFactorSquared) {
    Tensor x = random_tensor({2, 3, 3}, 13);
    x.set_requires_grad(true);
    sum(upsample2d(x, 2)).backward();
    for (Real g : x.grad()) EXPECT_EQ(g, 4);
    EXPECT_LT(gradcheck([&] { return sum(upsample2d(x, 2)); }, {x}).max_rel_error, 1e-8);
}

TEST(Upsample, RejectsBadFactor) { EXPECT_THROW(upsample2d(Tensor::zeros({1, 2, 2}), 0), ArgumentError); }

TEST(Activation, AnalyticValues) {
    EXPECT_EQ(sigmoid(Tensor::scalar(0)).item(), 0.5);
    EXPECT_EQ(tanh(Tensor::scalar(0)).item(), 0);
    EXPECT_NEAR(silu(Tensor::scalar(1)).item(), 1 / (1 + std::exp(-1.0)), 1e-15);
}

TEST(Activation, ReluOfNegativeHasZeroGradient) {
    Tensor x = Tensor::scalar(-2.5);
    x.set_requires_grad(true);
    Tensor y = relu(x);
    EXPECT_EQ(y.item(), 0);
    y.backward();
    EXPECT_EQ(x.grad()[0], 0);
}

TEST(Activation, GradientsMatchFiniteDifferences) {
    Tensor x = random_tensor({3, 4, 5}, 14, 3);
    for (auto kind : {Activation::silu, Activation::sigmoid, Activation::tanh}) {
        const auto r = gradcheck([&] { return probe(activation(x, kind)); }, {x});
        EXPECT_LT(r.max_rel_error, 1e-5);
    }
}

TEST(Activation, StableForLargeInputs) {
    const Tensor x = Tensor::from({4}, {-800, -40, 40, 800});
    for (auto kind : {Activation::silu, Activation::sigmoid, Activation::tanh})
        for (const Tensor t = activation(x, kind); Real v : t.data()) EXPECT_TRUE(std::isfinite(v));
    for (const Tensor t = log_sigmoid(x); Real v : t.data()) EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(log_sigmoid(x)[0], -800, 1e-9);
}

TEST(LogSigmoid, MatchesDirectFormulaAndGradient) {
    Tensor x = random_tensor({10}, 15, 4);
    const Tensor y = log_sigmoid(x);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y[i], std::log(1 / (1 + std::exp(-x[i]))), 1e-12);
    EXPECT_LT(gradcheck([&] { return probe(log_sigmoid(x)); }, {x}).max_rel_error, 1e-6);
}

TEST(LogSoftmax, NormalisesAndDifferentiates) {
    Tensor x = random_tensor({7}, 16, 5);
    const Tensor y = log_softmax(x);
    double total = 0;
    for (Real v : y.data()) total += std::exp(v);
    EXPECT_NEAR(total, 1, 1e-12);
    EXPECT_LT(gradcheck([&] { return probe(log_softmax(x)); }, {x}).max_rel_error, 1e-6);
}

TEST(GroupNorm, ConstantInputGivesZeros) {
    const Tensor y = group_norm(Tensor::full({4, 3, 3}, 2.5), 2, Tensor::full({4}, 1), Tensor::zeros({4}));
    for (Real v : y.data()) EXPECT_EQ(v, 0);
}

TEST(GroupNorm, GroupStatisticsMatchDirectComputation) {
    const int C = 6, G = 3, HW = 16;
    const Tensor x = random_tensor({C, 4, 4}, 17, 3);
    const Tensor beta = random_tensor({C}, 18);
    const Tensor y = group_norm(x, G, Tensor::full({C}, 1), Tensor::zeros({C}));
    const Tensor yb = group_norm(x, G, Tensor::full({C}, 1), beta);
    const int per = C / G * HW;
    for (int g = 0; g < G; ++g) {
        double m = 0, v = 0, mb = 0, beta_mean = 0;
        for (int i = 0; i < per; ++i) {
            m += y[g * per + i];
            mb += yb[g * per + i];
        }
        m /= per;
        mb /= per;
        for (int i = 0; i < per; ++i) v += (y[g * per + i] - m) * (y[g * per + i] - m);
        v /= per;
        for (int c = 0; c < C / G; ++c) beta_mean += beta[g * (C / G) + c];
        beta_mean /= C / G;
        EXPECT_NEAR(m, 0, 1e-5);
        EXPECT_NEAR(v, 1, 1e-3); // epsilon pulls the variance slightly below 1
        EXPECT_NEAR(mb, beta_mean, 1e-5);
    }
}

TEST(GroupNorm, ZeroGammaGivesBeta) {
    const Tensor beta = Tensor::from({2}, {0.3, -1.5});
    const Tensor y = group_norm(random_tensor({2, 3, 3}, 19), 1, Tensor::zeros({2}), beta);
    for (int i = 0; i < 18; ++i) EXPECT_EQ(y[i], beta[i / 9]);
}

TEST(GroupNorm, RejectsIndivisibleGroups) {
    EXPECT_THROW(group_norm(Tensor::zeros({6, 2, 2}), 4, Tensor::zeros({6}), Tensor::zeros({6})), ArgumentError);
}

TEST(GroupNorm, GradientMatchesFiniteDifferences) {
    Tensor x = random_tensor({4, 3, 3}, 20, 2), g = random_tensor({4}, 21), b = random_tensor({4}, 22);
    EXPECT_LT(gradcheck([&] { return probe(group_norm(x, 2, g, b)); }, {x, g, b}).max_rel_error, 1e-5);
}

TEST(Backward, SquareHasGradientTwoX) {
    Tensor x = Tensor::scalar(3);
    x.set_requires_grad(true);
    mul(x, x).backward();
    EXPECT_EQ(x.grad()[0], 6);
}

TEST(Backward, IndependentLossGivesZeroGradient) {
    Tensor x = Tensor::scalar(3), y = Tensor::scalar(2);
    x.set_requires_grad(true);
    y.set_requires_grad(true);
    mul(y, y).backward();
    EXPECT_TRUE(!x.has_grad() || x.grad()[0] == 0);
}

TEST(Backward, NonScalarThrows) {
    Tensor x = random_tensor({3}, 23);
    x.set_requires_grad(true);
    EXPECT_THROW(scale(x, 2).backward(), ContractError);
}

TEST(Backward, GradientsAccumulateAcrossUses) {
    Tensor x = Tensor::scalar(2);
    x.set_requires_grad(true);
    add(mul(x, x), scale(x, 3)).backward();
    EXPECT_EQ(x.grad()[0], 7);
}

TEST(Backward, TwoLayerConvNetMatchesFiniteDifferences) {
    Tensor x = random_tensor({2, 6, 6}, 24);
    Tensor k1 = random_tensor({3, 2, 3, 3}, 25, 0.5), b1 = random_tensor({3}, 26, 0.1);
    Tensor k2 = random_tensor({2, 3, 3, 3}, 27, 0.5), b2 = random_tensor({2}, 28, 0.1);
    auto f = [&] { return probe(conv2d(silu(conv2d(x, k1, b1, 1, 1)), k2, b2, 2, 1)); };
    EXPECT_LT(gradcheck(f, {x, k1, b1, k2, b2}).max_rel_error, 1e-3);
}

TEST(Backward, ShapeOpsMatchFiniteDifferences) {
    Tensor a = random_tensor({2, 3, 3}, 29), b = random_tensor({3, 3, 3}, 30);
    Tensor s = random_tensor({2}, 31), t = random_tensor({2}, 32);
    EXPECT_LT(gradcheck([&] { return probe(concat_channels(a, b)); }, {a, b}).max_rel_error, 1e-8);
    EXPECT_LT(gradcheck([&] { return probe(film(a, s, t)); }, {a, s, t}).max_rel_error, 1e-8);
    EXPECT_LT(gradcheck([&] { return probe(slice(reshape(b, {27}), 4, 10)); }, {b}).max_rel_error, 1e-8);
    EXPECT_LT(gradcheck([&] { return mse(a, scale(a, 0.5)); }, {a}).max_rel_error, 1e-8);
    EXPECT_LT(gradcheck([&] { return probe(clamp(b, -0.5, 0.5)); }, {b}).max_rel_error, 1e-8);
}

TEST(Backward, NoGradGuardRecordsNothing) {
    Tensor x = random_tensor({3}, 33);
    x.set_requires_grad(true);
    NoGradGuard ng;
    const Tensor y = sum(mul(x, x));
    EXPECT_FALSE(y.requires_grad());
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
    const Tensor x = random_tensor({8, 12, 12}, 34), k = random_tensor({16, 8, 3, 3}, 35);
    const Tensor a = conv2d(x, k, 1, 1), b = conv2d(x, k, 1, 1);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Finiteness, RandomPipelineStaysFinite) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Tensor x = random_tensor({4, 8, 8}, seed, 10);
        Tensor k = random_tensor({4, 4, 3, 3}, seed + 100);
        x.set_requires_grad(true);
        Tensor y = group_norm(silu(conv2d(x, k, 1, 1)), 2, Tensor::full({4}, 1), Tensor::zeros({4}));
        Tensor loss = mean(mul(y, y));
        loss.backward();
        EXPECT_TRUE(std::isfinite(loss.item()));
        for (Real g : x.grad()) ASSERT_TRUE(std::isfinite(g));
    }
}
