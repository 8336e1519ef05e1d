#pragma once

// Glyph legibility and style scoring, candidate ranking, evaluation metrics.

#include "dsf/glyph.hpp"
#include "dsf/nn.hpp"
#include "dsf/rng.hpp"
#include "dsf/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dsf {

/// Classes recognised by the glyph classifier, in class-index order.
inline constexpr std::string_view kGlyphClasses = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
inline constexpr int kNumGlyphClasses = static_cast<int>(kGlyphClasses.size());
inline constexpr Real kDefaultBlurSigma = 1;

/// Class index of `c` (case-insensitive for letters), or -1.
int glyph_class_index(char c);

/// Colour-independent input for the classifier: L-infinity distance of every
/// pixel from the background (median of the border pixels), box-resized to
/// size x size and rescaled so the strongest pixel is 1. Shape [1 x size x size].
Tensor ink_map(const Tensor& image, int size);

struct GlyphClassifierConfig {
    int input_size = 32;
    int width = 16;
    int train_steps = 500;
    int batch_size = 16;
    Real lr = Real(2e-3);
    /// Every n-th training example is pure noise with a uniform target.
    int noise_every = 16;
};

class GlyphClassifier {
public:
    GlyphClassifier() = default;
    static GlyphClassifier init(const GlyphClassifierConfig& cfg, Rng& rng);

    const GlyphClassifierConfig& config() const { return cfg_; }
    /// Logits [36] for an ink map.
    Tensor logits(const Tensor& ink) const;
    /// Softmax over the 36 classes for an RGB image.
    std::vector<Real> predict(const Tensor& image) const;
    int predict_class(const Tensor& image) const;
    NamedParams params() const;

    /// Accuracy on clean renders measured at the end of training, in [0, 1].
    Real holdout_accuracy = 0;

private:
    GlyphClassifierConfig cfg_;
    Conv2d conv1_, conv2_, conv3_, conv4_;
    Linear out_;
};

/// Randomised training render: font, character, colours, stroke thickness,
/// slant, offset, blur and pixel noise all drawn from `rng`.
Tensor random_glyph_example(const std::vector<FontRef>& fonts, char c, Rng& rng);

/// Throws ConfigError on an empty font list.
GlyphClassifier train_glyph_classifier(const std::vector<FontRef>& fonts,
                                       const GlyphClassifierConfig& cfg, Rng& rng);

/// Fraction of the 36 characters of every font, rendered black on white with
/// default settings, that the classifier labels correctly.
Real clean_render_accuracy(const GlyphClassifier& clf, const std::vector<FontRef>& fonts);

/// Probability of `target` after an optional Gaussian blur.
/// Throws ArgumentError for characters outside the class set or negative sigma.
Real glyph_score(const GlyphClassifier& clf, const Tensor& image, char target,
                 Real blur_sigma = 0);

/// Percentage of images whose arg-max class equals the label.
/// Throws ArgumentError on a length mismatch or unknown label.
Real ocr_accuracy(const std::vector<Tensor>& images, const std::string& labels,
                  const GlyphClassifier& clf, Real blur_sigma = 0);
/// Same metric over precomputed predicted classes.
Real ocr_accuracy(const std::vector<int>& predicted, const std::vector<int>& labels);

struct StyleScorerConfig {
    int input_size = 32;
    int channels1 = 16;
    int channels2 = 32;
    std::uint64_t seed = 17;
};

/// Fixed random-feature embedding (channel statistics of two seeded conv
/// layers plus colour moments) compared by cosine to a style-corpus centroid.
class StyleScorer {
public:
    explicit StyleScorer(const StyleScorerConfig& cfg = {});

    std::vector<Real> features(const Tensor& image) const;
    /// Centres the feature space on `reference` (may be empty), scales each
    /// dimension by its spread over both sets and stores the corpus centroid.
    void fit(const std::vector<Tensor>& corpus, const std::vector<Tensor>& reference);
    bool fitted() const { return !centroid_.empty(); }
    /// Cosine similarity to the centroid mapped to [0, 1].
    /// Throws ContractError if not fitted.
    Real score(const Tensor& image) const;

    const std::vector<Real>& centroid() const { return centroid_; }

private:
    std::vector<Real> embed(const Tensor& image) const;

    StyleScorerConfig cfg_;
    Tensor k1_, k2_;
    std::vector<Real> center_, spread_, centroid_;
};

Real style_score(const StyleScorer& scorer, const Tensor& image);

struct Candidate {
    Tensor image;
    Real glyph_score = -1;
    Real style_score = -1;
    std::uint64_t seed = 0;
};

/// a is at least as good on both axes and strictly better on one.
bool dominates(const Candidate& a, const Candidate& b);

struct Ranking {
    /// Candidate indices by descending glyph + style score.
    std::vector<std::size_t> order;
    /// Indices of the non-dominated candidates, in rank order.
    std::vector<std::size_t> pareto_front;
};

/// Throws ArgumentError on an empty list or unscored candidates.
Ranking rank_candidates(const std::vector<Candidate>& candidates);

/// Foreground by Otsu's threshold on the L-infinity distance from `background`.
Tensor adaptive_foreground(const Tensor& image, Rgb background);
/// Intersection over union of two binary masks of equal shape.
Real mask_iou(const Tensor& a, const Tensor& b);
/// Binary glyph mask (coverage > 0.5) of a spec.
Tensor glyph_mask(const GlyphSpec& spec);
/// Mean pairwise L2 distance between images.
Real mean_pairwise_l2(const std::vector<Tensor>& images);

struct EvalRow {
    std::string method_tag;
    Real ocr = 0;
    Real ocr_blurred = 0;
    Real style_score = 0;
};

std::string eval_report_csv(const std::vector<EvalRow>& rows);

} // namespace dsf
