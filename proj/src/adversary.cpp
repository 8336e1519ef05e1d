#include "dsf/adversary.hpp"

#include "dsf/error.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace dsf {

Discriminator Discriminator::init(const DiscriminatorConfig& cfg, Rng& rng) {
    if (cfg.latent_channels < 1 || cfg.width < 1 || cfg.latent_size < 4 || cfg.latent_size % 4 != 0)
        throw ConfigError("discriminator latent_size must be a positive multiple of 4");
    Discriminator d;
    d.cfg_ = cfg;
    const int w = cfg.width;
    d.conv1_ = Conv2d::make(cfg.latent_channels, w, 3, 1, 1, rng);
    d.conv2_ = Conv2d::make(w, 2 * w, 3, 2, 1, rng);
    d.conv3_ = Conv2d::make(2 * w, 2 * w, 3, 2, 1, rng);
    const int side = cfg.latent_size / 4;
    d.out_ = Linear::make(2 * w * side * side, 1, rng, cfg.zero_final ? Real(0) : Real(1));
    return d;
}

Tensor Discriminator::logit(const Tensor& latent) const {
    const Shape want{cfg_.latent_channels, cfg_.latent_size, cfg_.latent_size};
    if (latent.shape() != want)
        throw DimensionError("discriminator expects " + shape_str(want) + ", got " +
                             shape_str(latent.shape()));
    Tensor h = silu(conv1_(latent));
    h = silu(conv2_(h));
    h = silu(conv3_(h));
    return clamp(out_(reshape(h, {static_cast<int>(h.numel())})), -kLogitClamp, kLogitClamp);
}

NamedParams Discriminator::params() const {
    NamedParams p;
    conv1_.collect(p, "conv1");
    conv2_.collect(p, "conv2");
    conv3_.collect(p, "conv3");
    out_.collect(p, "out");
    return p;
}

Tensor discriminate(const Discriminator& d, const Tensor& latent) { return sigmoid(d.logit(latent)); }

Tensor discriminator_objective_from_logits(const Tensor& real_logit, const Tensor& fake_logit) {
    const Tensor r = clamp(real_logit, -kLogitClamp, kLogitClamp);
    const Tensor f = clamp(fake_logit, -kLogitClamp, kLogitClamp);
    // log(1 - sigmoid(x)) = log sigmoid(-x)
    return add(sum(log_sigmoid(r)), sum(log_sigmoid(neg(f))));
}

Tensor discriminator_objective(const Discriminator& d, const Tensor& z_g, const Tensor& z_hat) {
    return discriminator_objective_from_logits(d.logit(z_g), d.logit(z_hat));
}

Real fusion_objective(Real l_diff, Real l_dis, Real lambda) {
    if (lambda < 0) throw ArgumentError("lambda must be >= 0");
    return l_diff + lambda * l_dis;
}

Tensor fusion_objective(const Tensor& l_diff, const Tensor& l_dis, Real lambda) {
    if (lambda < 0) throw ArgumentError("lambda must be >= 0");
    return add(l_diff, scale(l_dis, lambda));
}

void FusionTrainConfig::validate() const {
    if (!(lambda >= 0)) throw ConfigError("lambda must be >= 0");
    if (!(lr_generator > 0)) throw ConfigError("lr_generator must be > 0");
    if (!(lr_discriminator > 0)) throw ConfigError("lr_discriminator must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (d_steps_per_g_step < 0) throw ConfigError("d_steps_per_g_step must be >= 0");
    if (style_image_count < 1) throw ConfigError("style_image_count must be >= 1");
}

int default_epochs(AugmentMode mode) { return mode == AugmentMode::single_font ? 200 : 300; }

TrainStreams TrainStreams::from_seed(std::uint64_t seed) {
    return {Rng::stream(seed, "noise"), Rng::stream(seed, "disc-noise"),
            Rng::stream(seed, "augment"), Rng::stream(seed, "shuffle")};
}

NamedParams Generator::params() const {
    NamedParams p = unet.params();
    if (cond.trainable) p.emplace_back("cond.embedding", cond.embedding);
    return p;
}

namespace {

void require_frozen(const LatentCodec& codec) {
    if (!codec.frozen()) throw ContractError("codec must be frozen before adversarial training");
}

Tensor mean_of(const std::vector<Tensor>& xs) {
    return scale(sum_all(xs), Real(1) / static_cast<Real>(xs.size()));
}

/// Turns gradient tracking off for a parameter set for the lifetime of the scope.
class GradPause {
public:
    explicit GradPause(NamedParams params) : params_(std::move(params)) {
        for (auto& [name, t] : params_) was_.push_back(t.requires_grad());
        set_requires_grad(params_, false);
    }
    ~GradPause() {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i].second.set_requires_grad(was_[i]);
    }
    GradPause(const GradPause&) = delete;
    GradPause& operator=(const GradPause&) = delete;

private:
    NamedParams params_;
    std::vector<bool> was_;
};

struct NoisedLatent {
    int t;
    Tensor eps;
    Tensor z_t;
};

NoisedLatent noise_latent(const Tensor& z0, const NoiseSchedule& sched, Rng& rng) {
    const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.T)));
    Tensor eps = randn(z0.shape(), rng);
    Tensor z_t = forward_noise(z0, t, eps, sched);
    return {t, eps, z_t};
}

} // namespace

Real train_step_d(Discriminator& d, const Generator& g, const LatentCodec& codec,
                  const std::vector<Tensor>& style_latents, const std::vector<Tensor>& glyph_images,
                  const NoiseSchedule& sched, Adam& d_opt, Real lr, Rng& rng) {
    require_frozen(codec);
    if (style_latents.empty() || glyph_images.empty())
        throw ArgumentError("discriminator step needs at least one style latent and one glyph");

    std::vector<Tensor> fakes, reals;
    {
        NoGradGuard ng;
        for (const auto& z0 : style_latents) {
            const NoisedLatent n = noise_latent(z0, sched, rng);
            fakes.push_back(predicted_z0(n.z_t, n.t, g.unet.predict_eps(n.z_t, n.t, g.cond), sched));
        }
        for (const auto& img : glyph_images) reals.push_back(codec.encode(img));
    }

    std::vector<Tensor> real_terms, fake_terms;
    for (const auto& z : reals) real_terms.push_back(log_sigmoid(d.logit(z)));
    for (const auto& z : fakes) fake_terms.push_back(log_sigmoid(neg(d.logit(z))));
    const Tensor objective = add(mean_of(real_terms), mean_of(fake_terms));
    const Real value = objective.item();
    if (!std::isfinite(value)) throw TrainingError("discriminator objective is not finite");
    neg(objective).backward();
    d_opt.step(lr);
    return value;
}

GeneratorLosses train_step_g(const Discriminator& d, Generator& g, const LatentCodec& codec,
                             const std::vector<Tensor>& style_latents, const NoiseSchedule& sched,
                             Adam& g_opt, Real lr, Real lambda, Rng& rng) {
    require_frozen(codec);
    if (style_latents.empty()) throw ArgumentError("generator step needs at least one style latent");
    if (lambda < 0) throw ArgumentError("lambda must be >= 0");

    GradPause pause(d.params());
    std::vector<Tensor> diff_terms, adv_terms;
    for (const auto& z0 : style_latents) {
        const NoisedLatent n = noise_latent(z0, sched, rng);
        const Tensor eps_hat = g.unet.predict_eps(n.z_t, n.t, g.cond);
        diff_terms.push_back(diffusion_loss(eps_hat, n.eps));
        const Tensor z_hat = predicted_z0(n.z_t, n.t, eps_hat, sched);
        adv_terms.push_back(neg(log_sigmoid(d.logit(z_hat))));
    }
    const Tensor l_diff = mean_of(diff_terms);
    const Tensor l_adv = mean_of(adv_terms);
    const Tensor loss = fusion_objective(l_diff, l_adv, lambda);
    if (!std::isfinite(loss.item()))
        throw TrainingError("generator loss is not finite (l_diff=" + std::to_string(l_diff.item()) +
                            ", l_adv=" + std::to_string(l_adv.item()) + ")");
    loss.backward();
    g_opt.step(lr);
    return {l_diff.item(), l_adv.item()};
}

Real train_step_diffusion(Generator& g, const std::vector<Tensor>& style_latents,
                          const NoiseSchedule& sched, Adam& g_opt, Real lr, Rng& rng) {
    if (style_latents.empty()) throw ArgumentError("diffusion step needs at least one style latent");
    std::vector<Tensor> diff_terms;
    for (const auto& z0 : style_latents) {
        const NoisedLatent n = noise_latent(z0, sched, rng);
        diff_terms.push_back(diffusion_loss(g.unet.predict_eps(n.z_t, n.t, g.cond), n.eps));
    }
    const Tensor l_diff = mean_of(diff_terms);
    if (!std::isfinite(l_diff.item())) throw TrainingError("diffusion loss is not finite");
    l_diff.backward();
    g_opt.step(lr);
    return l_diff.item();
}

std::string loss_curve_csv(const std::vector<EpochLosses>& log) {
    std::ostringstream os;
    os.precision(10);
    os << "epoch,l_diff,l_dis,l_total\n";
    for (const auto& e : log) os << e.epoch << ',' << e.l_diff << ',' << e.l_dis << ',' << e.l_total << '\n';
    return os.str();
}

FusionModel train_fusion(const LatentCodec& codec, const std::vector<Tensor>& style_images,
                         const AugmentPolicy& policy, const std::string& text,
                         const FusionTrainConfig& cfg, const FusionSetup& setup,
                         const EpochCallback& on_epoch) {
    cfg.validate();
    policy.validate();
    require_frozen(codec);
    if (style_images.size() < static_cast<std::size_t>(cfg.style_image_count))
        throw ConfigError("style_image_count is " + std::to_string(cfg.style_image_count) +
                          " but only " + std::to_string(style_images.size()) + " style images were given");

    FusionModel model;
    {
        Rng init = Rng::stream(cfg.seed, "unet-init");
        model.generator.unet = UNet::init(setup.unet, init);
        model.generator.cond = ConditioningVector::from_prompt(setup.prompt, setup.unet.d_cond, cfg.seed);
        Rng dinit = Rng::stream(cfg.seed, "disc-init");
        model.discriminator = Discriminator::init(setup.disc, dinit);
    }
    Generator& g = model.generator;
    Discriminator& d = model.discriminator;
    Adam g_opt(tensors_of(g.params()));
    Adam d_opt(tensors_of(d.params()));
    TrainStreams streams = TrainStreams::from_seed(cfg.seed);

    std::vector<Tensor> latents;
    {
        NoGradGuard ng;
        for (int i = 0; i < cfg.style_image_count; ++i) latents.push_back(codec.encode(style_images[i]));
    }

    std::vector<std::size_t> order(latents.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[streams.shuffle.below(i)]);

        Real sum_diff = 0, sum_dis = 0;
        int g_steps = 0, d_steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Tensor> batch;
            for (std::size_t k = start; k < end; ++k) batch.push_back(latents[order[k]]);

            for (int s = 0; s < cfg.d_steps_per_g_step; ++s) {
                std::vector<Tensor> glyphs;
                for (std::size_t k = start; k < end; ++k)
                    glyphs.push_back(sample_augmented_glyph(policy, text, streams.augment));
                sum_dis += train_step_d(d, g, codec, batch, glyphs, setup.sched, d_opt,
                                        cfg.lr_discriminator, streams.discriminator);
                ++d_steps;
            }
            const GeneratorLosses gl = train_step_g(d, g, codec, batch, setup.sched, g_opt,
                                                    cfg.lr_generator, cfg.lambda, streams.generator);
            sum_diff += gl.l_diff;
            ++g_steps;
        }
        EpochLosses e;
        e.epoch = epoch;
        e.l_diff = sum_diff / g_steps;
        e.l_dis = d_steps > 0 ? sum_dis / d_steps : Real(0);
        e.l_total = fusion_objective(e.l_diff, e.l_dis, cfg.lambda);
        if (!std::isfinite(e.l_total))
            throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
        model.log.push_back(e);
        if (on_epoch) on_epoch(e);
    }
    return model;
}

} // namespace dsf
