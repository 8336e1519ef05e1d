#pragma once

// Small convolutional autoencoder that maps 64x64 RGB images to 4x16x16
// latents. It is trained once on the union of style images and glyph renders
// and then frozen; every later stage only encodes and decodes with it.

#include "dsf/nn.hpp"
#include "dsf/rng.hpp"
#include "dsf/tensor.hpp"

#include <vector>

namespace dsf {

struct CodecConfig {
    int image_size = 64;
    int latent_channels = 4;
    int hidden1 = 16;
    int hidden2 = 32;
};

struct CodecTrainConfig {
    int epochs = 20;
    int batch_size = 8;
    Real lr = Real(2e-3);
};

class LatentCodec {
public:
    LatentCodec() = default;
    static LatentCodec init(const CodecConfig& cfg, Rng& rng);

    const CodecConfig& config() const { return cfg_; }
    int latent_size() const { return cfg_.image_size / 4; }
    Shape latent_shape() const { return {cfg_.latent_channels, latent_size(), latent_size()}; }

    /// Image [3 x 64 x 64] in [0,1] -> scaled latent [4 x 16 x 16].
    Tensor encode(const Tensor& image) const;
    /// Latent -> image clamped to [0,1].
    Tensor decode(const Tensor& latent) const;

    /// Differentiable reconstruction path used during training (unscaled).
    Tensor reconstruct(const Tensor& image) const;

    NamedParams params() const;
    bool frozen() const { return frozen_; }
    void freeze();

    /// Multiplier applied to raw encoder output so corpus latents have unit variance.
    Real latent_scale = 1;
    /// Mean reconstruction MSE per training epoch.
    std::vector<Real> training_log;

private:
    Tensor encode_raw(const Tensor& image) const;
    Tensor decode_raw(const Tensor& latent) const;
    void check_image_shape(const Tensor& image) const;

    CodecConfig cfg_;
    Conv2d enc1_, enc2_, enc3_;
    Conv2d dec1_, dec2_, dec3_;
    bool frozen_ = false;
};

/// Trains a codec on `corpus` (>= 64 images) and returns it frozen.
/// Throws ConfigError on an undersized corpus, TrainingError on divergence.
LatentCodec train_codec(const std::vector<Tensor>& corpus, const CodecConfig& model,
                        const CodecTrainConfig& cfg, Rng& rng);

} // namespace dsf
