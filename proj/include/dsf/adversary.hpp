#pragma once

// Latent-space discriminator and the alternating discriminator / generator
// trainer.

#include "dsf/codec.hpp"
#include "dsf/diffusion.hpp"
#include "dsf/glyph.hpp"
#include "dsf/optim.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dsf {

inline constexpr Real kLogitClamp = 20;
inline constexpr Real kDefaultLambda = Real(0.01);

struct DiscriminatorConfig {
    int latent_channels = 4;
    int latent_size = 16;
    int width = 16;
    /// Start with an all-zero output layer, so D(x) = 0.5 everywhere.
    bool zero_final = false;
};

class Discriminator {
public:
    Discriminator() = default;
    static Discriminator init(const DiscriminatorConfig& cfg, Rng& rng);

    const DiscriminatorConfig& config() const { return cfg_; }
    /// Raw logit clamped to [-20, 20], shape [1].
    Tensor logit(const Tensor& latent) const;
    NamedParams params() const;

private:
    DiscriminatorConfig cfg_;
    Conv2d conv1_, conv2_, conv3_;
    Linear out_;
};

/// D(latent) as a differentiable [1] tensor in (0, 1).
Tensor discriminate(const Discriminator& d, const Tensor& latent);

/// log D(z_g) + log(1 - D(z_hat)), computed from clamped logits.
Tensor discriminator_objective(const Discriminator& d, const Tensor& z_g, const Tensor& z_hat);
/// Same objective expressed directly on the two logits.
Tensor discriminator_objective_from_logits(const Tensor& real_logit, const Tensor& fake_logit);

/// l_diff + lambda * l_dis. Throws ArgumentError on negative lambda.
Real fusion_objective(Real l_diff, Real l_dis, Real lambda);
Tensor fusion_objective(const Tensor& l_diff, const Tensor& l_dis, Real lambda);

struct FusionTrainConfig {
    Real lambda = kDefaultLambda;
    Real lr_generator = Real(1e-5);
    Real lr_discriminator = Real(1e-4);
    int epochs = 200;
    int batch_size = 4;
    AugmentMode mode = AugmentMode::single_font;
    int d_steps_per_g_step = 1;
    int style_image_count = 25;
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Epoch count used when a config does not set one explicitly.
int default_epochs(AugmentMode mode);

/// Random streams owned by a training run. Generator and discriminator draws
/// are kept apart so changing lambda never shifts the generator's noise.
struct TrainStreams {
    Rng generator;     // timesteps and noise for generator steps
    Rng discriminator; // timesteps and noise for discriminator fakes
    Rng augment;       // glyph augmentation
    Rng shuffle;       // style-image order

    static TrainStreams from_seed(std::uint64_t seed);
};

/// Generator under training: the denoiser plus its conditioning vector.
struct Generator {
    UNet unet;
    ConditioningVector cond;

    NamedParams params() const;
};

/// One ascent step on the discriminator objective. Fakes are predicted-z0
/// estimates from noised style latents (generator run without gradients);
/// reals are the encoded glyph images. Returns the objective before the step.
/// Throws ContractError if the codec is not frozen.
Real train_step_d(Discriminator& d, const Generator& g, const LatentCodec& codec,
                  const std::vector<Tensor>& style_latents, const std::vector<Tensor>& glyph_images,
                  const NoiseSchedule& sched, Adam& d_opt, Real lr, Rng& rng);

struct GeneratorLosses {
    Real l_diff = 0;
    Real l_adv = 0; // mean of -log D(z_hat)
};

/// One descent step on L_diff + lambda * (-log D(z_hat)); D is left untouched.
GeneratorLosses train_step_g(const Discriminator& d, Generator& g, const LatentCodec& codec,
                             const std::vector<Tensor>& style_latents, const NoiseSchedule& sched,
                             Adam& g_opt, Real lr, Real lambda, Rng& rng);

/// Plain diffusion fine-tuning step (no discriminator). Returns L_diff.
Real train_step_diffusion(Generator& g, const std::vector<Tensor>& style_latents,
                          const NoiseSchedule& sched, Adam& g_opt, Real lr, Rng& rng);

struct EpochLosses {
    int epoch = 0;
    Real l_diff = 0;
    Real l_dis = 0;
    Real l_total = 0;
};

std::string loss_curve_csv(const std::vector<EpochLosses>& log);

struct FusionModel {
    Generator generator;
    Discriminator discriminator;
    std::vector<EpochLosses> log;
};

struct FusionSetup {
    UNetConfig unet;
    DiscriminatorConfig disc;
    NoiseSchedule sched = make_schedule();
    std::string prompt; // seeds the conditioning vector
};

using EpochCallback = std::function<void(const EpochLosses&)>;

/// Alternating D/G loop over the first `cfg.style_image_count` style images.
/// Throws ConfigError if too few images are supplied and TrainingError on a
/// non-finite loss.
FusionModel train_fusion(const LatentCodec& codec, const std::vector<Tensor>& style_images,
                         const AugmentPolicy& policy, const std::string& text,
                         const FusionTrainConfig& cfg, const FusionSetup& setup,
                         const EpochCallback& on_epoch = {});

} // namespace dsf
