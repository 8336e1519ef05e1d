#include "dsf/codec.hpp"

#include "dsf/error.hpp"
#include "dsf/optim.hpp"

#include <cmath>
#include <numeric>

namespace dsf {

LatentCodec LatentCodec::init(const CodecConfig& cfg, Rng& rng) {
    if (cfg.image_size % 4 != 0 || cfg.image_size < 16)
        throw ConfigError("codec image_size must be a multiple of 4 and >= 16");
    LatentCodec c;
    c.cfg_ = cfg;
    c.enc1_ = Conv2d::make(3, cfg.hidden1, 3, 2, 1, rng);
    c.enc2_ = Conv2d::make(cfg.hidden1, cfg.hidden2, 3, 2, 1, rng);
    c.enc3_ = Conv2d::make(cfg.hidden2, cfg.latent_channels, 3, 1, 1, rng, Real(0.5));
    c.dec1_ = Conv2d::make(cfg.latent_channels, cfg.hidden2, 3, 1, 1, rng);
    c.dec2_ = Conv2d::make(cfg.hidden2, cfg.hidden1, 3, 1, 1, rng);
    c.dec3_ = Conv2d::make(cfg.hidden1, 3, 3, 1, 1, rng, Real(0.5));
    return c;
}

void LatentCodec::check_image_shape(const Tensor& image) const {
    if (image.shape() != Shape{3, cfg_.image_size, cfg_.image_size})
        throw DimensionError("codec expects an image of shape " +
                             shape_str({3, cfg_.image_size, cfg_.image_size}) + ", got " +
                             shape_str(image.shape()));
}

Tensor LatentCodec::encode_raw(const Tensor& image) const {
    Tensor h = silu(enc1_(image));
    h = silu(enc2_(h));
    return enc3_(h);
}

Tensor LatentCodec::decode_raw(const Tensor& latent) const {
    Tensor h = silu(dec1_(latent));
    h = silu(dec2_(upsample2d(h, 2)));
    return dec3_(upsample2d(h, 2));
}

Tensor LatentCodec::encode(const Tensor& image) const {
    check_image_shape(image);
    return scale(encode_raw(image), latent_scale);
}

Tensor LatentCodec::decode(const Tensor& latent) const {
    if (latent.shape() != latent_shape())
        throw DimensionError("codec expects a latent of shape " + shape_str(latent_shape()) +
                             ", got " + shape_str(latent.shape()));
    return clamp(decode_raw(scale(latent, Real(1) / latent_scale)), 0, 1);
}

Tensor LatentCodec::reconstruct(const Tensor& image) const {
    check_image_shape(image);
    return decode_raw(encode_raw(image));
}

NamedParams LatentCodec::params() const {
    NamedParams p;
    enc1_.collect(p, "enc1");
    enc2_.collect(p, "enc2");
    enc3_.collect(p, "enc3");
    dec1_.collect(p, "dec1");
    dec2_.collect(p, "dec2");
    dec3_.collect(p, "dec3");
    return p;
}

void LatentCodec::freeze() {
    for (auto& [name, t] : params()) {
        Tensor h = t;
        h.zero_grad();
        h.set_requires_grad(false);
        h.set_frozen(true);
    }
    frozen_ = true;
}

LatentCodec train_codec(const std::vector<Tensor>& corpus, const CodecConfig& model,
                        const CodecTrainConfig& cfg, Rng& rng) {
    if (corpus.empty()) throw ConfigError("codec training corpus is empty");
    if (corpus.size() < 64)
        throw ConfigError("codec training needs at least 64 images, got " +
                          std::to_string(corpus.size()));
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0))
        throw ConfigError("codec training config must have positive epochs, batch size and lr");

    LatentCodec codec = LatentCodec::init(model, rng);
    Adam opt(tensors_of(codec.params()));
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        Real epoch_loss = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<Tensor> losses;
            for (std::size_t k = start; k < end; ++k) {
                const Tensor& x = corpus[order[k]];
                losses.push_back(mse(codec.reconstruct(x), x));
            }
            Tensor loss = scale(sum_all(losses), Real(1) / static_cast<Real>(losses.size()));
            if (!std::isfinite(loss.item()))
                throw TrainingError("codec loss became non-finite at epoch " + std::to_string(epoch));
            loss.backward();
            opt.step(cfg.lr);
            epoch_loss += loss.item() * static_cast<Real>(end - start);
        }
        codec.training_log.push_back(epoch_loss / static_cast<Real>(corpus.size()));
    }

    // Normalise latents to unit variance over the corpus.
    {
        NoGradGuard ng;
        Real s = 0, s2 = 0;
        std::size_t n = 0;
        for (const auto& x : corpus) {
            for (Real v : codec.encode(x).data()) {
                s += v;
                s2 += v * v;
                ++n;
            }
        }
        const Real m = s / static_cast<Real>(n);
        const Real var = s2 / static_cast<Real>(n) - m * m;
        codec.latent_scale = var > 0 ? Real(1) / std::sqrt(var) : Real(1);
    }
    codec.freeze();
    return codec;
}

} // namespace dsf
