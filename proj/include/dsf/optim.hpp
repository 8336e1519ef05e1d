#pragma once

#include "dsf/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dsf {

struct AdamState {
    std::vector<Real> first_moment;
    std::vector<Real> second_moment;
    std::uint64_t step_count = 0;
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real epsilon = Real(1e-8);
};

/// One bias-corrected Adam update of `params` in place.
/// Throws ContractError on a length mismatch or if `params` is frozen.
void adam_step(Tensor& params, std::span<const Real> grad, AdamState& state, Real lr);

/// Adam over a fixed list of parameter tensors. `step()` consumes the
/// accumulated gradients and clears them; parameters that received no
/// gradient are still advanced with a zero gradient so every state keeps
/// the same step count.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params);

    void step(Real lr);
    void zero_grad();

    const std::vector<Tensor>& params() const { return params_; }
    const std::vector<AdamState>& states() const { return states_; }

private:
    std::vector<Tensor> params_;
    std::vector<AdamState> states_;
};

} // namespace dsf
