#pragma once

// End-to-end stages behind the CLI. Every stage reads and writes files in the
// run's output directory; all writes are atomic.

#include "dsf/bundle.hpp"
#include "dsf/config.hpp"
#include "dsf/rank.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dsf {

namespace run_files {
inline constexpr const char* kCodec = "codec.dsfb";
inline constexpr const char* kModel = "model.dsfb";
inline constexpr const char* kLossCurve = "loss.csv";
inline constexpr const char* kCandidates = "candidates";
inline constexpr const char* kContactSheet = "contact_sheet.png";
inline constexpr const char* kRankReport = "rank.csv";
inline constexpr const char* kRankedSheet = "ranked_sheet.png";
inline constexpr const char* kRankedManifest = "ranked_sheet.txt";
inline constexpr const char* kEvalReport = "eval.csv";
} // namespace run_files

using Progress = std::function<void(const std::string&)>;

/// PNG files of a directory in name order. Throws ConfigError if fewer than
/// `min_count` images are present.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir, std::size_t min_count = 1);
std::vector<Tensor> load_style_images(const std::filesystem::path& dir, std::size_t min_count = 1);

/// Style images plus `codec_glyph_count` augmented renders of random classes.
std::vector<Tensor> codec_corpus(const RunConfig& cfg);

/// Trains the codec and writes `codec.dsfb` into the output directory.
LatentCodec run_train_codec(const RunConfig& cfg, const Progress& progress = {});

LatentCodec load_codec(const std::filesystem::path& bundle_path);

/// Alternating D/G training on the first `cfg.style_image_count` images of
/// `style_dir`. Writes the loss curve CSV and the model bundle (which embeds
/// the codec) into `out_dir`.
ModelBundle train_dsfusion(const std::filesystem::path& style_dir, const AugmentPolicy& glyph_policy,
                           const std::string& text, const FusionTrainConfig& cfg,
                           const FusionSetup& setup, const LatentCodec& codec,
                           const std::filesystem::path& out_dir, const std::string& config_echo = {},
                           const Progress& progress = {});

ModelBundle run_train(const RunConfig& cfg, const Progress& progress = {});

struct SampleSettings {
    std::string sampler = "ddim";
    int steps = 50;
};

/// n decoded images, candidate i drawn from its own sub-stream of (seed, "sampler").
std::vector<Candidate> sample_candidates(const ModelBundle& bundle, const SampleSettings& settings,
                                         int n, std::uint64_t seed);

/// Writes candidates/candidate_XX.png and the contact sheet.
std::vector<Candidate> run_sample(const RunConfig& cfg, int n, std::uint64_t seed);

/// Scoring models shared by `rank` and `eval`, both derived from the seed.
struct Scorers {
    GlyphClassifier classifier;
    StyleScorer style;
};
Scorers build_scorers(const RunConfig& cfg);

struct RankedRow {
    std::string file;
    Candidate candidate;
    bool on_front = false;
};

/// Scores every candidate PNG, writes rank.csv, the ranked contact sheet and
/// its manifest, and optionally a scatter CSV of the raw score pairs.
std::vector<RankedRow> run_rank(const RunConfig& cfg, const std::filesystem::path& scatter_csv = {});

/// Writes eval.csv with rows for the sampled candidates and for plain renders.
std::vector<EvalRow> run_eval(const RunConfig& cfg);

/// Composes a stylized letter into `word` and writes it to `out`. The plain
/// letters take the stylized image's dominant colour unless `letter_color` is set.
void run_compose(const RunConfig& cfg, const std::filesystem::path& stylized, const std::string& word,
                 int position, const std::filesystem::path& out, int padding,
                 std::optional<Rgb> letter_color = std::nullopt);

struct LambdaAblationRow {
    Real lambda = 0;
    std::uint64_t seed = 0;
    Real iou = 0;
};

/// Trains one model per (lambda, seed) and reports the mean foreground IoU
/// between its decoded samples and the glyph mask.
std::vector<LambdaAblationRow> ablate_lambda(const RunConfig& cfg, const LatentCodec& codec,
                                             const std::vector<Real>& lambdas,
                                             const std::vector<std::uint64_t>& seeds, int n_samples,
                                             const Progress& progress = {});
std::string lambda_ablation_csv(const std::vector<LambdaAblationRow>& rows);

struct StyleCountAblationRow {
    int style_image_count = 0;
    std::uint64_t seed = 0;
    int epochs = 0;
    Real diversity = 0;
};

/// Trains one model per (count, seed) and reports the mean pairwise L2
/// distance between its decoded samples. With `equalize_steps`, every count
/// gets the optimizer-step budget of the largest count.
std::vector<StyleCountAblationRow> ablate_style_count(const RunConfig& cfg, const LatentCodec& codec,
                                                      const std::vector<int>& counts,
                                                      const std::vector<std::uint64_t>& seeds,
                                                      int n_samples, bool equalize_steps,
                                                      const Progress& progress = {});
std::string style_count_ablation_csv(const std::vector<StyleCountAblationRow>& rows);

/// Mean foreground IoU of decoded samples against the mask of `text` in `font`.
Real mean_glyph_iou(const std::vector<Tensor>& images, const std::string& text, const FontRef& font,
                    Rgb background);

} // namespace dsf
