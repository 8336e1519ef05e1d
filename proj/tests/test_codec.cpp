#include "dsf/codec.hpp"
#include "dsf/config.hpp"
#include "dsf/error.hpp"
#include "dsf/optim.hpp"
#include "dsf/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dsf;

namespace {

double l2(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

std::vector<Tensor> small_corpus(int n, std::uint64_t seed) {
    AugmentPolicy p;
    p.mode = AugmentMode::multi_font;
    p.font_pool = load_bundled_fonts();
    Rng rng(seed);
    std::vector<Tensor> out;
    for (int i = 0; i < n; ++i)
        out.push_back(sample_augmented_glyph(p, std::string(1, kGlyphClasses[i % kGlyphClasses.size()]), rng));
    return out;
}

class TrainedCodec : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        RunConfig cfg; // bundled demo corpus, default codec settings
        Rng rng = Rng::stream(cfg.seed, "codec");
        codec_ = new LatentCodec(train_codec(codec_corpus(cfg), cfg.codec_config(), cfg.codec_train_config(), rng));
    }
    static void TearDownTestSuite() {
        delete codec_;
        codec_ = nullptr;
    }
    static LatentCodec* codec_;
};

LatentCodec* TrainedCodec::codec_ = nullptr;

} // namespace

TEST(Codec, ShapeContracts) {
    Rng rng(1);
    const LatentCodec c = LatentCodec::init({}, rng);
    const Tensor z = c.encode(solid_image(64, 64, {0.5, 0.2, 0.9}));
    EXPECT_EQ(z.shape(), (Shape{4, 16, 16}));
    EXPECT_EQ(c.decode(z).shape(), (Shape{3, 64, 64}));
    EXPECT_THROW(c.encode(solid_image(32, 32, {0, 0, 0})), DimensionError);
    EXPECT_THROW(c.encode(Tensor::zeros({1, 64, 64})), DimensionError);
    EXPECT_THROW(c.decode(Tensor::zeros({4, 8, 8})), DimensionError);
}

TEST(Codec, EncodeAndDecodeAreDeterministic) {
    Rng rng(2);
    const LatentCodec c = LatentCodec::init({}, rng);
    const Tensor img = small_corpus(1, 3)[0];
    const Tensor a = c.encode(img), b = c.encode(img);
    for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a[i], b[i]);
    const Tensor x = c.decode(a), y = c.decode(a);
    for (std::size_t i = 0; i < x.numel(); ++i) ASSERT_EQ(x[i], y[i]);
}

TEST(Codec, DecodeClampsRandomLatents) {
    Rng rng(4);
    const LatentCodec c = LatentCodec::init({}, rng);
    for (int k = 0; k < 3; ++k) {
        Tensor z = randn({4, 16, 16}, rng);
        for (Real& v : z.mutable_data()) v *= 10;
        const Tensor img = c.decode(z);
        for (Real v : img.data()) ASSERT_TRUE(v >= 0 && v <= 1);
    }
}

TEST(Codec, TrainingRejectsSmallOrEmptyCorpus) {
    Rng rng(5);
    EXPECT_THROW(train_codec({}, {}, {}, rng), ConfigError);
    EXPECT_THROW(train_codec(small_corpus(10, 1), {}, {}, rng), ConfigError);
}

TEST(Codec, SameSeedGivesIdenticalWeights) {
    const auto corpus = small_corpus(64, 6);
    CodecTrainConfig tc;
    tc.epochs = 1;
    Rng a(7), b(7);
    const LatentCodec x = train_codec(corpus, {}, tc, a), y = train_codec(corpus, {}, tc, b);
    EXPECT_EQ(params_checksum(x.params()), params_checksum(y.params()));
    EXPECT_EQ(x.latent_scale, y.latent_scale);
}

TEST(Codec, FrozenCodecRefusesOptimizerSteps) {
    const auto corpus = small_corpus(64, 8);
    CodecTrainConfig tc;
    tc.epochs = 1;
    Rng rng(9);
    const LatentCodec c = train_codec(corpus, {}, tc, rng);
    EXPECT_TRUE(c.frozen());
    for (const auto& [name, t] : c.params()) {
        Tensor p = t;
        AdamState st;
        const std::vector<Real> g(p.numel(), 1);
        EXPECT_THROW(adam_step(p, g, st, 0.1), ContractError) << name;
    }
}

TEST_F(TrainedCodec, ReconstructionLossHalvesAndNeverDiverges) {
    const auto& log = codec_->training_log;
    ASSERT_EQ(static_cast<int>(log.size()), CodecTrainConfig{}.epochs);
    EXPECT_LE(log.back(), 0.5 * log.front());
    Real running_min = log.front();
    for (Real v : log) {
        EXPECT_LT(v, 2 * running_min);
        running_min = std::min(running_min, v);
    }
}

TEST_F(TrainedCodec, ReturnedFrozenWithUnitScaleLatents) {
    EXPECT_TRUE(codec_->frozen());
    RunConfig cfg;
    double ss = 0;
    std::size_t n = 0;
    for (const auto& img : codec_corpus(cfg)) {
        for (Real v : codec_->encode(img).data()) ss += v * v;
        n += 4 * 16 * 16;
    }
    EXPECT_NEAR(std::sqrt(ss / n), 1, 0.5);
}

TEST_F(TrainedCodec, ReconstructsHeldOutGlyphs) {
    double mse = 0;
    const auto probe = small_corpus(20, 1234);
    for (const auto& img : probe) {
        const Tensor r = codec_->decode(codec_->encode(img));
        double s = 0;
        for (std::size_t i = 0; i < img.numel(); ++i) s += (img[i] - r[i]) * (img[i] - r[i]);
        mse += s / img.numel();
    }
    EXPECT_LT(mse / probe.size(), 0.02);
}

TEST_F(TrainedCodec, LettersAreFartherApartThanTheirAugmentations) {
    // Five letters, each rendered in four augmentations (font, colour).
    const std::string letters = "AEKOT";
    AugmentPolicy p;
    p.mode = AugmentMode::multi_font;
    p.font_pool = load_bundled_fonts();
    p.randomize_color = false;
    Rng rng(77);
    std::vector<std::vector<Tensor>> z(letters.size());
    for (std::size_t l = 0; l < letters.size(); ++l)
        for (int k = 0; k < 4; ++k) {
            p.fixed_color = Rgb{1, 1, 1};
            z[l].push_back(codec_->encode(sample_augmented_glyph(p, std::string(1, letters[l]), rng)));
        }
    double intra = 0, inter = 0;
    int ni = 0, nx = 0;
    for (std::size_t a = 0; a < letters.size(); ++a)
        for (std::size_t b = a; b < letters.size(); ++b)
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) {
                    if (a == b && j <= i) continue;
                    const double d = l2(z[a][i], z[b][j]);
                    if (a == b) intra += d, ++ni;
                    else inter += d, ++nx;
                }
    EXPECT_GT(inter / nx, intra / ni);
}
