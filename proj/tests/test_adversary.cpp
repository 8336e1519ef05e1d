#include "dsf/adversary.hpp"
#include "dsf/error.hpp"
#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dsf;
using dsf::testing::gradcheck;
using dsf::testing::random_tensor;

namespace {

LatentCodec frozen_codec() {
    Rng rng(100);
    LatentCodec c = LatentCodec::init({}, rng);
    c.freeze();
    return c;
}

Generator tiny_generator(std::uint64_t seed) {
    Rng rng(seed);
    return Generator{UNet::init(UNetConfig{4, 8, 2, 1, 16}, rng), ConditioningVector::from_prompt("A", 16, seed)};
}

std::vector<Tensor> latents(int n, std::uint64_t seed, int size = 16) {
    std::vector<Tensor> out;
    for (int i = 0; i < n; ++i) out.push_back(random_tensor({4, size, size}, seed + i));
    return out;
}

std::vector<Tensor> glyphs(int n, std::uint64_t seed) {
    AugmentPolicy p;
    p.font_pool = {load_bundled_font("mono-a")};
    Rng rng(seed);
    std::vector<Tensor> out;
    for (int i = 0; i < n; ++i) out.push_back(sample_augmented_glyph(p, "A", rng));
    return out;
}

double log_sig(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

} // namespace

TEST(Discriminator, ZeroFinalLayerGivesOneHalf) {
    Rng rng(1);
    DiscriminatorConfig cfg;
    cfg.zero_final = true;
    const Discriminator d = Discriminator::init(cfg, rng);
    for (std::uint64_t s = 0; s < 5; ++s) EXPECT_EQ(discriminate(d, random_tensor({4, 16, 16}, s, 5)).item(), 0.5);
}

TEST(Discriminator, GradientWrtLatentMatchesFiniteDifferences) {
    Rng rng(2);
    const Discriminator d = Discriminator::init({4, 8, 8}, rng);
    Tensor z = random_tensor({4, 8, 8}, 3);
    EXPECT_LT(gradcheck([&] { return discriminate(d, z); }, {z}).max_rel_error, 1e-3);
}

TEST(Discriminator, OutputStrictlyInsideUnitIntervalForExtremeInputs) {
    Rng rng(4);
    const Discriminator d = Discriminator::init({}, rng);
    for (double v : {-1e3, 1e3}) {
        for (std::uint64_t s = 0; s < 3; ++s) {
            Tensor z = random_tensor({4, 16, 16}, s);
            for (Real& x : z.mutable_data()) x = Real(v * (x > 0 ? 1 : -0.5));
            const Real p = discriminate(d, z).item();
            EXPECT_GT(p, 0);
            EXPECT_LT(p, 1);
            EXPECT_LE(std::abs(d.logit(z).item()), kLogitClamp);
        }
    }
    EXPECT_THROW(d.logit(Tensor::zeros({4, 8, 8})), DimensionError);
}

TEST(DiscriminatorObjective, BothHalfGivesTwoLogHalf) {
    const Real v = discriminator_objective_from_logits(Tensor::scalar(0), Tensor::scalar(0)).item();
    EXPECT_NEAR(v, 2 * std::log(0.5), 1e-12);
    Rng rng(5);
    DiscriminatorConfig cfg;
    cfg.zero_final = true;
    const Discriminator d = Discriminator::init(cfg, rng);
    EXPECT_NEAR(discriminator_objective(d, random_tensor({4, 16, 16}, 6), random_tensor({4, 16, 16}, 7)).item(),
                -1.3863, 1e-4);
}

TEST(DiscriminatorObjective, PerfectSeparationApproachesZero) {
    const Real v = discriminator_objective_from_logits(Tensor::scalar(40), Tensor::scalar(-40)).item();
    EXPECT_LE(v, 0);
    EXPECT_GT(v, -1e-8);
}

TEST(DiscriminatorObjective, MatchesFormulaAndIsNonPositive) {
    Rng rng(8);
    for (int k = 0; k < 200; ++k) {
        const double a = rng.uniform(-15, 15), b = rng.uniform(-15, 15);
        const double da = 1 / (1 + std::exp(-a)), db = 1 / (1 + std::exp(-b));
        const Real v = discriminator_objective_from_logits(Tensor::scalar(a), Tensor::scalar(b)).item();
        // The direct form cancels badly once D saturates; the stable form covers that range.
        if (std::abs(a) < 8 && std::abs(b) < 8) EXPECT_NEAR(v, std::log(da) + std::log(1 - db), 1e-12);
        EXPECT_NEAR(v, log_sig(a) + log_sig(-b), 1e-12);
        EXPECT_LT(v, 0);
    }
}

TEST(FusionObjective, Arithmetic) {
    EXPECT_EQ(fusion_objective(0.5, -1.0, 0.01), 0.49);
    EXPECT_EQ(fusion_objective(0.7, -3.0, 0), 0.7);
    EXPECT_EQ(kDefaultLambda, Real(0.01));
    EXPECT_THROW(fusion_objective(0.5, -1, -0.1), ArgumentError);
    EXPECT_NEAR(fusion_objective(Tensor::scalar(0.5), Tensor::scalar(-1), 0.01).item(), 0.49, 1e-15);
}

TEST(FusionConfig, DefaultsAndValidation) {
    FusionTrainConfig c;
    EXPECT_EQ(c.lambda, Real(0.01));
    EXPECT_EQ(c.lr_generator, Real(1e-5));
    EXPECT_EQ(c.lr_discriminator, Real(1e-4));
    EXPECT_EQ(c.style_image_count, 25);
    EXPECT_EQ(c.d_steps_per_g_step, 1);
    EXPECT_EQ(default_epochs(AugmentMode::single_font), 200);
    EXPECT_EQ(default_epochs(AugmentMode::multi_font), 300);
    c.validate();
    for (auto mutate : std::vector<std::function<void(FusionTrainConfig&)>>{
             [](auto& x) { x.lambda = -1; }, [](auto& x) { x.lr_generator = 0; },
             [](auto& x) { x.lr_discriminator = -1; }, [](auto& x) { x.style_image_count = 0; },
             [](auto& x) { x.batch_size = 0; }, [](auto& x) { x.d_steps_per_g_step = -1; }}) {
        FusionTrainConfig bad;
        mutate(bad);
        EXPECT_THROW(bad.validate(), ConfigError);
    }
}

TEST(TrainStepD, LeavesGeneratorUntouchedAndAcceptsBatchOfOne) {
    const LatentCodec codec = frozen_codec();
    const Generator g = tiny_generator(9);
    Rng rng(10);
    Discriminator d = Discriminator::init({}, rng);
    Adam opt(tensors_of(d.params()));
    const auto before_g = params_checksum(g.params());
    const auto before_d = params_checksum(d.params());
    const NoiseSchedule s = make_schedule();
    train_step_d(d, g, codec, latents(1, 11), glyphs(1, 12), s, opt, 1e-4, rng);
    EXPECT_EQ(params_checksum(g.params()), before_g);
    EXPECT_NE(params_checksum(d.params()), before_d);
}

TEST(TrainStepD, ObjectiveRisesAgainstFixedGenerator) {
    const LatentCodec codec = frozen_codec();
    const Generator g = tiny_generator(13);
    Rng rng(14);
    Discriminator d = Discriminator::init({}, rng);
    Adam opt(tensors_of(d.params()));
    const NoiseSchedule s = make_schedule();
    const auto style = latents(4, 15);
    const auto glyph = glyphs(4, 16);
    std::vector<Real> trace;
    for (int i = 0; i < 50; ++i) trace.push_back(train_step_d(d, g, codec, style, glyph, s, opt, 1e-3, rng));
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) first += trace[i], last += trace[40 + i];
    EXPECT_GT(last, first);
}

TEST(TrainSteps, RequireFrozenCodec) {
    Rng rng(17);
    const LatentCodec loose = LatentCodec::init({}, rng);
    Generator g = tiny_generator(18);
    Discriminator d = Discriminator::init({}, rng);
    Adam dopt(tensors_of(d.params())), gopt(tensors_of(g.params()));
    const NoiseSchedule s = make_schedule();
    EXPECT_THROW(train_step_d(d, g, loose, latents(1, 1), glyphs(1, 1), s, dopt, 1e-4, rng), ContractError);
    EXPECT_THROW(train_step_g(d, g, loose, latents(1, 1), s, gopt, 1e-4, 0.01, rng), ContractError);
}

TEST(TrainStepG, LeavesDiscriminatorUntouched) {
    const LatentCodec codec = frozen_codec();
    Generator g = tiny_generator(19);
    Rng rng(20);
    const Discriminator d = Discriminator::init({}, rng);
    Adam opt(tensors_of(g.params()));
    const auto before_d = params_checksum(d.params());
    const auto before_g = params_checksum(g.params());
    const auto losses = train_step_g(d, g, codec, latents(2, 21), make_schedule(), opt, 1e-3, 1.0, rng);
    EXPECT_EQ(params_checksum(d.params()), before_d);
    EXPECT_NE(params_checksum(g.params()), before_g);
    EXPECT_GT(losses.l_adv, 0);
    for (const auto& [name, t] : d.params()) EXPECT_FALSE(t.has_grad() && t.grad()[0] != 0) << name;
}

TEST(TrainStepG, ZeroLambdaMatchesDiffusionOnlyStep) {
    const LatentCodec codec = frozen_codec();
    Generator a = tiny_generator(22), b = tiny_generator(22);
    Rng drng(23);
    const Discriminator d = Discriminator::init({}, drng);
    Adam oa(tensors_of(a.params())), ob(tensors_of(b.params()));
    const NoiseSchedule s = make_schedule();
    const auto style = latents(3, 24);
    Rng ra(25), rb(25);
    for (int i = 0; i < 5; ++i) {
        const auto la = train_step_g(d, a, codec, style, s, oa, 1e-3, 0, ra);
        const Real lb = train_step_diffusion(b, style, s, ob, 1e-3, rb);
        EXPECT_EQ(la.l_diff, lb);
    }
    const auto pa = a.params(), pb = b.params();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t k = 0; k < pa.size(); ++k)
        for (std::size_t i = 0; i < pa[k].second.numel(); ++i) ASSERT_EQ(pa[k].second[i], pb[k].second[i]);
}

TEST(TrainStepG, DiffusionLossFallsOnSmallCorpus) {
    const LatentCodec codec = frozen_codec();
    Generator g = tiny_generator(26);
    Rng rng(27);
    const Discriminator d = Discriminator::init({4, 8, 8}, rng);
    Adam opt(tensors_of(g.params()));
    const NoiseSchedule s = make_schedule();
    // Four smooth latents: easy structure for the denoiser to pick up.
    std::vector<Tensor> style;
    for (int k = 0; k < 4; ++k) {
        Tensor z = Tensor::zeros({4, 8, 8});
        auto v = z.mutable_data();
        for (int c = 0; c < 4; ++c)
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) v[(c * 8 + y) * 8 + x] = Real(std::sin(0.5 * (x + k) + c) * std::cos(0.4 * y));
        style.push_back(z);
    }
    std::vector<Real> trace;
    for (int i = 0; i < 200; ++i) trace.push_back(train_step_g(d, g, codec, {style[i % 4]}, s, opt, 1e-3, 0.01, rng).l_diff);
    double first = 0, last = 0;
    for (int i = 0; i < 50; ++i) first += trace[i], last += trace[150 + i];
    EXPECT_LT(last, first);
}

TEST(TrainFusion, RunsAndLogsEveryEpoch) {
    const LatentCodec codec = frozen_codec();
    std::vector<Tensor> style;
    for (int i = 0; i < 3; ++i) style.push_back(solid_image(64, 64, {0.2 * i, 0.5, 0.9 - 0.2 * i}));
    AugmentPolicy p;
    p.font_pool = {load_bundled_font("mono-a")};
    FusionTrainConfig cfg;
    cfg.epochs = 3;
    cfg.style_image_count = 3;
    cfg.batch_size = 2;
    FusionSetup setup;
    setup.unet = UNetConfig{4, 8, 2, 1, 16};
    setup.prompt = "A";
    int calls = 0;
    const FusionModel m = train_fusion(codec, style, p, "A", cfg, setup, [&](const EpochLosses&) { ++calls; });
    EXPECT_EQ(calls, 3);
    ASSERT_EQ(m.log.size(), 3u);
    for (const auto& e : m.log) {
        EXPECT_TRUE(std::isfinite(e.l_diff) && std::isfinite(e.l_dis));
        EXPECT_LE(e.l_dis, 0);
        EXPECT_NEAR(e.l_total, fusion_objective(e.l_diff, e.l_dis, cfg.lambda), 1e-12);
    }
    const std::string csv = loss_curve_csv(m.log);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,l_diff,l_dis,l_total");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

    // Same seed, same model.
    const FusionModel again = train_fusion(codec, style, p, "A", cfg, setup);
    EXPECT_EQ(params_checksum(again.generator.params()), params_checksum(m.generator.params()));
    EXPECT_EQ(params_checksum(again.discriminator.params()), params_checksum(m.discriminator.params()));

    cfg.style_image_count = 4;
    EXPECT_THROW(train_fusion(codec, style, p, "A", cfg, setup), ConfigError);
}
