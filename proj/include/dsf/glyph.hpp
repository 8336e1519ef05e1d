#pragma once

// Stroke fonts and glyph rendering.
//
// A stroke font stores each character as polylines inside the unit square
// (x to the right, y downwards). Rendering sweeps a round pen of the font's
// thickness along every polyline, optionally shears the result, fits the text
// box into the canvas and anti-aliases with 4x4 super-sampling.
//
// File format (plain text, '#' starts a comment, blank lines ignored):
//
//     strokefont v1 <name> <default_thickness>
//     glyph <char> <n_polylines>
//     <k> x1 y1 x2 y2 ... xk yk        (one line per polyline)
//
// `<char>` is a single printable character, or the word `space`.

#include "dsf/image.hpp"
#include "dsf/rng.hpp"
#include "dsf/tensor.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dsf {

struct Point {
    Real x = 0, y = 0;
    bool operator==(const Point&) const = default;
};

using Polyline = std::vector<Point>;

struct StrokeFont {
    std::string name;
    std::map<char, std::vector<Polyline>> glyphs;
    Real default_thickness = Real(0.08);

    bool has(char c) const { return glyphs.count(c) != 0; }
    /// Throws GlyphMissingError.
    const std::vector<Polyline>& glyph(char c) const;
    /// Throws ParseError (line 0) on any violated invariant.
    void validate() const;

    bool operator==(const StrokeFont&) const = default;
};

using FontRef = std::shared_ptr<const StrokeFont>;

StrokeFont parse_stroke_font(const std::string& text);
std::string format_stroke_font(const StrokeFont& font);
StrokeFont load_stroke_font(const std::filesystem::path& path);
void save_stroke_font(const StrokeFont& font, const std::filesystem::path& path);

/// Directory holding bundled fonts and the demo style corpus. `DSF_ASSET_DIR`
/// in the environment overrides the compiled-in location.
std::filesystem::path asset_dir();
std::vector<std::string> bundled_font_names();
FontRef load_bundled_font(const std::string& name);
std::vector<FontRef> load_bundled_fonts();
/// Path-or-bundled-name lookup used by configs and the CLI.
FontRef resolve_font(const std::string& path_or_name);

struct GlyphSpec {
    std::string text;
    FontRef font;
    int image_size = 64;
    Rgb foreground{0, 0, 0};
    Rgb background{1, 1, 1};
    Real thickness_scale = 1;
    Real slant = 0; // horizontal shear; positive leans right

    /// Throws ArgumentError on invalid fields, GlyphMissingError on missing glyphs.
    void validate() const;
};

/// Pen path of every stroke mapped into canvas pixel coordinates.
struct StrokeLayout {
    struct Segment {
        Point a, b;
    };
    std::vector<Segment> segments;
    Real radius = 0; // pen radius in pixels
    int width = 0, height = 0;
};

/// Geometry of `spec.text` fitted into a width x height canvas. Each character
/// advances one unit; the sheared text box is scaled uniformly and centred.
StrokeLayout layout_text(const GlyphSpec& spec, int width, int height);

/// Fraction of sub-samples covered by the pen, per pixel, [height x width].
Tensor stroke_coverage(const StrokeLayout& layout, int samples_per_axis = 4);

Tensor rasterize(const GlyphSpec& spec);
/// Whole text rendered into a canvas of the given size.
Tensor rasterize_canvas(const GlyphSpec& spec, int width, int height);

enum class AugmentMode { single_font, multi_font };

struct AugmentPolicy {
    AugmentMode mode = AugmentMode::single_font;
    std::vector<FontRef> font_pool;
    bool randomize_color = true;
    Rgb fixed_color{1, 1, 1};
    Rgb background{0, 0, 0};
    int image_size = 64;
    Real thickness_scale = 1;
    Real slant = 0;

    /// Throws ConfigError.
    void validate() const;
};

/// HSV-uniform colour with value >= 0.3.
Rgb random_color(Rng& rng);

/// Single-font mode keeps `font_pool[0]` and varies the colour; multi-font mode
/// draws a font and a colour on every call. Draw order: font (multi-font only),
/// then hue, saturation, value.
Tensor sample_augmented_glyph(const AugmentPolicy& policy, const std::string& text, Rng& rng);

/// Mask [H x W]: 1 where the L-infinity colour distance to `background` exceeds tau.
Tensor segment_foreground(const Tensor& image, Rgb background, Real tau);

/// Most common colour among clearly-foreground pixels: the most populated
/// coarse (8-level) colour bin, then its most frequent 8-bit colour.
Rgb dominant_color(const Tensor& image, Rgb background);

struct ComposeOptions {
    int padding = 0;
    /// Colour of the plain letters; defaults to the stylized image's dominant colour.
    std::optional<Rgb> letter_color;
};

/// Places `stylized` in cell `position` of a strip of `word_spec.image_size`
/// square cells and renders the remaining letters around it.
Tensor compose_word(const Tensor& stylized, int position, const GlyphSpec& word_spec,
                    const ComposeOptions& options = {});

} // namespace dsf
