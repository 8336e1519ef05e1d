#include "dsf/nn.hpp"

#include "dsf/error.hpp"

#include <cmath>
#include <cstring>
#include <map>

namespace dsf {

Tensor normal_param(const Shape& shape, Real stddev, Rng& rng) {
    std::vector<Real> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<Real>(rng.normal()) * stddev;
    Tensor t = Tensor::from(shape, std::move(v));
    t.set_requires_grad(true);
    return t;
}

Tensor constant_param(const Shape& shape, Real value) {
    Tensor t = Tensor::full(shape, value);
    t.set_requires_grad(true);
    return t;
}

Conv2d Conv2d::make(int in, int out, int kernel, int stride, int pad, Rng& rng, Real gain) {
    const Real stddev = gain * std::sqrt(Real(2) / static_cast<Real>(in * kernel * kernel));
    return Conv2d{normal_param({out, in, kernel, kernel}, stddev, rng), constant_param({out}, 0),
                  stride, pad};
}

void Conv2d::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

Linear Linear::make(int in, int out, Rng& rng, Real gain) {
    const Real stddev = gain * std::sqrt(Real(1) / static_cast<Real>(in));
    return Linear{normal_param({out, in}, stddev, rng), constant_param({out}, 0)};
}

void Linear::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

GroupNorm GroupNorm::make(int channels, int max_groups) {
    int groups = std::min(max_groups, channels);
    while (channels % groups != 0) --groups;
    return GroupNorm{constant_param({channels}, 1), constant_param({channels}, 0), groups};
}

void GroupNorm::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

std::vector<Tensor> tensors_of(const NamedParams& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.push_back(t);
    return out;
}

std::size_t parameter_count(const NamedParams& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

std::uint64_t params_checksum(const NamedParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : params) {
        for (Real v : t.data()) {
            unsigned char bytes[sizeof(Real)];
            std::memcpy(bytes, &v, sizeof(Real));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

void set_frozen(const NamedParams& params, bool frozen) {
    for (const auto& [name, t] : params) {
        Tensor copy = t;
        copy.set_frozen(frozen);
    }
}

void set_requires_grad(const NamedParams& params, bool on) {
    for (const auto& [name, t] : params) {
        Tensor copy = t;
        copy.set_requires_grad(on);
    }
}

Tensor randn(const Shape& shape, Rng& rng) {
    std::vector<Real> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<Real>(rng.normal());
    return Tensor::from(shape, std::move(v));
}

void assign_params(const NamedParams& dst, const NamedParams& src) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : src) by_name[name] = &t;
    for (const auto& [name, t] : dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("missing parameter '" + name + "'");
        if (it->second->shape() != t.shape())
            throw FormatError("parameter '" + name + "' has shape " +
                              shape_str(it->second->shape()) + ", expected " +
                              shape_str(t.shape()));
        Tensor target = t;
        const bool was_frozen = target.frozen();
        auto d = target.mutable_data();
        const auto s = it->second->data();
        std::copy(s.begin(), s.end(), d.begin());
        target.set_frozen(was_frozen);
    }
}

} // namespace dsf
