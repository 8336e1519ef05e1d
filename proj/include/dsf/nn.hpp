#pragma once

// Parameterised layers and named parameter collections shared by the codec,
// the denoiser, the discriminator and the evaluation classifiers.

#include "dsf/rng.hpp"
#include "dsf/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dsf {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

/// Trainable leaf with N(0, std^2) entries.
Tensor normal_param(const Shape& shape, Real stddev, Rng& rng);
Tensor constant_param(const Shape& shape, Real value);

struct Conv2d {
    Tensor weight; // [out x in x k x k]
    Tensor bias;   // [out]
    int stride = 1;
    int pad = 0;

    /// He-style init scaled by `gain`; gain 0 gives an all-zero layer.
    static Conv2d make(int in, int out, int kernel, int stride, int pad, Rng& rng, Real gain = 1);
    Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad); }
    void collect(NamedParams& out, const std::string& prefix) const;
};

struct Linear {
    Tensor weight; // [out x in]
    Tensor bias;   // [out]

    static Linear make(int in, int out, Rng& rng, Real gain = 1);
    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
    void collect(NamedParams& out, const std::string& prefix) const;
};

struct GroupNorm {
    Tensor gamma;
    Tensor beta;
    int groups = 1;

    static GroupNorm make(int channels, int max_groups = 8);
    Tensor operator()(const Tensor& x) const { return group_norm(x, groups, gamma, beta); }
    void collect(NamedParams& out, const std::string& prefix) const;
};

std::vector<Tensor> tensors_of(const NamedParams& params);
std::size_t parameter_count(const NamedParams& params);
/// Order-sensitive FNV-1a checksum over the raw parameter bytes.
std::uint64_t params_checksum(const NamedParams& params);
void set_frozen(const NamedParams& params, bool frozen);
void set_requires_grad(const NamedParams& params, bool on);

/// Untracked tensor of independent standard normal draws, in row-major order.
Tensor randn(const Shape& shape, Rng& rng);
/// Copies values by name; throws FormatError on a missing name or shape mismatch.
void assign_params(const NamedParams& dst, const NamedParams& src);

} // namespace dsf
