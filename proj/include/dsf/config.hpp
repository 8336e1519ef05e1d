#pragma once

// Run configuration: a flat `key = value` text file with `#` comments.
// Unknown keys are rejected and every validation error names its key.

#include "dsf/adversary.hpp"
#include "dsf/codec.hpp"
#include "dsf/diffusion.hpp"
#include "dsf/glyph.hpp"
#include "dsf/rank.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dsf {

struct RunConfig {
    // Fusion training. `epochs = 0` selects the mode's default.
    Real lambda = kDefaultLambda;
    Real lr_generator = Real(1e-5);
    Real lr_discriminator = Real(1e-4);
    int epochs = 0;
    int batch_size = 4;
    AugmentMode mode = AugmentMode::single_font;
    int d_steps_per_g_step = 1;
    int style_image_count = 25;
    std::uint64_t seed = 0;

    // Inputs and outputs. Empty style_dir / fonts select the bundled assets.
    std::string style_dir;
    std::vector<std::string> fonts;
    std::string text = "A";
    std::string prompt;
    std::string output_dir = "dsf_run";
    bool randomize_color = true;

    // Sampling and evaluation.
    std::string sampler = "ddim";
    int sampler_steps = 50;
    int n_candidates = 4;
    Real blur_sigma = kDefaultBlurSigma;
    bool deterministic = true;

    // Model sizes.
    int unet_width = 32;
    int unet_levels = 3;
    int unet_blocks = 2;
    int d_cond = 128;
    int disc_width = 16;
    int timesteps = 200;
    Real beta_start = Real(1e-4);
    Real beta_end = Real(0.02);

    // Codec and classifier training.
    int codec_epochs = 20;
    int codec_batch_size = 8;
    Real codec_lr = Real(2e-3);
    int codec_glyph_count = 128;
    int classifier_steps = 500;

    /// Throws ConfigError naming the first offending key.
    void validate() const;

    FusionTrainConfig fusion_config() const;
    FusionSetup fusion_setup() const;
    CodecConfig codec_config() const { return {}; }
    CodecTrainConfig codec_train_config() const;
    NoiseSchedule schedule() const;
    std::filesystem::path style_path() const;
    std::vector<FontRef> font_pool() const;
    AugmentPolicy augment_policy() const;
    std::string effective_prompt() const { return prompt.empty() ? text : prompt; }

    bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string format_config(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Applies one `key = value` assignment (used for CLI overrides).
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

/// Honours DSF_DETERMINISTIC=1 from the environment.
bool deterministic_from_env(bool fallback);

} // namespace dsf
