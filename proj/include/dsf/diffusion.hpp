#pragma once

// Noise schedule, closed-form noising, the conditioned epsilon-prediction
// U-Net and the DDPM / DDIM samplers.

#include "dsf/nn.hpp"
#include "dsf/rng.hpp"
#include "dsf/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dsf {

struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
};

/// Linear beta schedule. Throws ArgumentError on an invalid range.
NoiseSchedule make_schedule(int T = 200, double beta_start = 1e-4, double beta_end = 0.02);
/// Throws ArgumentError if the arrays violate the schedule invariants.
void validate_schedule(const NoiseSchedule& sched);

/// sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
Tensor forward_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);
/// (z_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t); differentiable in both inputs.
Tensor predicted_z0(const Tensor& z_t, int t, const Tensor& eps_hat, const NoiseSchedule& sched);
/// Mean squared error between predicted and true noise.
Tensor diffusion_loss(const Tensor& eps_hat, const Tensor& eps);

/// Sinusoidal embedding of an integer timestep, length `dim` (even).
std::vector<Real> timestep_embedding(int t, int dim);

struct UNetConfig {
    int in_channels = 4;
    int base_width = 32;
    int levels = 3;
    int blocks_per_level = 2;
    int d_cond = 128;
};

/// Learned stand-in for an encoded text prompt.
struct ConditioningVector {
    Tensor embedding; // [d_cond]
    bool trainable = true;

    /// N(0,1) entries seeded from the prompt text and `seed`.
    static ConditioningVector from_prompt(const std::string& prompt, int d_cond,
                                          std::uint64_t seed, bool trainable = true);
};

class UNet {
public:
    UNet() = default;
    static UNet init(const UNetConfig& cfg, Rng& rng);

    const UNetConfig& config() const { return cfg_; }
    std::size_t parameter_count() const { return dsf::parameter_count(params()); }

    /// Noise estimate with the same shape as z_t.
    Tensor predict_eps(const Tensor& z_t, int t, const Tensor& cond) const;
    Tensor predict_eps(const Tensor& z_t, int t, const ConditioningVector& cond) const {
        return predict_eps(z_t, t, cond.embedding);
    }

    NamedParams params() const;

private:
    struct ResBlock {
        GroupNorm norm1, norm2;
        Conv2d conv1, conv2;
        Linear film;
        Conv2d skip; // 1x1, only when channel counts differ
        bool has_skip = false;

        Tensor operator()(const Tensor& x, const Tensor& emb) const;
        void collect(NamedParams& out, const std::string& prefix) const;
    };
    static ResBlock make_block(int in, int out, int emb_dim, Rng& rng);

    UNetConfig cfg_;
    Linear time1_, time2_, cond_proj_;
    Conv2d in_conv_;
    std::vector<std::vector<ResBlock>> down_;
    std::vector<Conv2d> downsample_;
    ResBlock mid_;
    std::vector<std::vector<ResBlock>> up_;
    std::vector<Conv2d> upsample_;
    GroupNorm out_norm_;
    Conv2d out_conv_;
};

/// Noise predictor used by the samplers: (z_t, t) -> eps_hat.
using EpsFn = std::function<Tensor(const Tensor&, int)>;
EpsFn eps_fn(const UNet& unet, const ConditioningVector& cond);

/// One ancestral chain from z_T, drawing per-step noise from `rng`.
Tensor ddpm_chain(const EpsFn& eps, const NoiseSchedule& sched, const Tensor& z_T, Rng& rng);

/// n independent ancestral chains, each on its own sub-stream split from `rng`.
std::vector<Tensor> sample_ddpm(const EpsFn& eps, const NoiseSchedule& sched,
                                const Shape& latent_shape, int n, Rng& rng);

/// Timesteps visited by a DDIM run of `steps` steps, ascending.
std::vector<int> ddim_timesteps(int T, int steps);

/// DDIM trajectory from z_T. eta = 0 is deterministic; eta > 0 draws from `rng`.
Tensor ddim_chain(const EpsFn& eps, const NoiseSchedule& sched, const Tensor& z_T, int steps,
                  double eta = 0, Rng* rng = nullptr);

/// Draws z_T from `rng` and runs a deterministic DDIM chain.
/// Throws ArgumentError unless 1 <= steps <= T.
Tensor sample_ddim(const EpsFn& eps, const NoiseSchedule& sched, const Shape& latent_shape,
                   int steps, Rng& rng);

} // namespace dsf
