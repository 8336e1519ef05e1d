#include "dsf/optim.hpp"

#include "dsf/error.hpp"

#include <cmath>

namespace dsf {

void adam_step(Tensor& params, std::span<const Real> grad, AdamState& state, Real lr) {
    if (params.frozen()) throw ContractError("optimizer step on frozen parameters");
    auto p = params.mutable_data();
    if (grad.size() != p.size())
        throw ContractError("adam_step: gradient has " + std::to_string(grad.size()) +
                            " elements, parameters have " + std::to_string(p.size()));
    if (state.first_moment.empty()) {
        state.first_moment.assign(p.size(), Real(0));
        state.second_moment.assign(p.size(), Real(0));
    }
    if (state.first_moment.size() != p.size() || state.second_moment.size() != p.size())
        throw ContractError("adam_step: moment arrays do not match parameter length");

    ++state.step_count;
    const auto t = static_cast<Real>(state.step_count);
    const Real bc1 = Real(1) - std::pow(state.beta1, t);
    const Real bc2 = Real(1) - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const Real g = grad[i];
        Real& m = state.first_moment[i];
        Real& v = state.second_moment[i];
        m = state.beta1 * m + (Real(1) - state.beta1) * g;
        v = state.beta2 * v + (Real(1) - state.beta2) * g * g;
        const Real mhat = m / bc1;
        const Real vhat = v / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

Adam::Adam(std::vector<Tensor> params) : params_(std::move(params)), states_(params_.size()) {}

void Adam::step(Real lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (p.has_grad()) {
            adam_step(p, p.grad(), states_[i], lr);
        } else {
            const std::vector<Real> zero(p.numel(), Real(0));
            adam_step(p, zero, states_[i], lr);
        }
    }
    zero_grad();
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

} // namespace dsf
