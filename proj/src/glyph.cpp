#include "dsf/glyph.hpp"

#include "dsf/error.hpp"
#include "dsf/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace dsf {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Font model and file format

const std::vector<Polyline>& StrokeFont::glyph(char c) const {
    auto it = glyphs.find(c);
    if (it == glyphs.end())
        throw GlyphMissingError("font '" + name + "' has no glyph for '" + std::string(1, c) + "'");
    return it->second;
}

void StrokeFont::validate() const {
    if (name.empty()) throw ParseError(0, "font name is empty");
    if (!(default_thickness > 0 && default_thickness < Real(0.5)))
        throw ParseError(0, "default thickness must lie in (0, 0.5)");
    for (const auto& [c, lines] : glyphs) {
        if (lines.empty() && c != ' ')
            throw ParseError(0, "glyph '" + std::string(1, c) + "' has no polylines");
        for (const auto& pl : lines) {
            if (pl.empty()) throw ParseError(0, "empty polyline");
            for (const auto& p : pl)
                if (!(p.x >= 0 && p.x <= 1 && p.y >= 0 && p.y <= 1))
                    throw ParseError(0, "coordinate out of unit square");
        }
    }
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    for (std::string tok; is >> tok;) out.push_back(tok);
    return out;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && p == end;
}

std::string fmt_real(Real v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string char_token(char c) { return c == ' ' ? "space" : std::string(1, c); }

} // namespace

StrokeFont parse_stroke_font(const std::string& text) {
    StrokeFont font;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool have_header = false;
    char current = 0;
    int remaining = 0;

    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto tok = split_ws(line);
        if (tok.empty()) continue;

        if (!have_header) {
            if (tok.size() != 4 || tok[0] != "strokefont")
                throw ParseError(lineno, "expected 'strokefont v1 <name> <thickness>'");
            if (tok[1] != "v1") throw ParseError(lineno, "unsupported version '" + tok[1] + "'");
            font.name = tok[2];
            if (!parse_number(tok[3], font.default_thickness))
                throw ParseError(lineno, "bad thickness '" + tok[3] + "'");
            if (!(font.default_thickness > 0 && font.default_thickness < Real(0.5)))
                throw ParseError(lineno, "default thickness must lie in (0, 0.5)");
            have_header = true;
            continue;
        }

        if (remaining == 0) {
            if (tok.size() != 3 || tok[0] != "glyph")
                throw ParseError(lineno, "expected 'glyph <char> <n_polylines>'");
            if (tok[1] == "space") {
                current = ' ';
            } else if (tok[1].size() == 1) {
                current = tok[1][0];
            } else {
                throw ParseError(lineno, "glyph name must be one character or 'space'");
            }
            if (font.glyphs.count(current))
                throw ParseError(lineno, "duplicate glyph '" + tok[1] + "'");
            if (!parse_number(tok[2], remaining) || remaining < 0)
                throw ParseError(lineno, "bad polyline count '" + tok[2] + "'");
            if (remaining == 0 && current != ' ')
                throw ParseError(lineno, "glyph '" + tok[1] + "' has no polylines");
            font.glyphs[current];
            continue;
        }

        int k = 0;
        if (!parse_number(tok[0], k) || k < 1)
            throw ParseError(lineno, "bad point count '" + tok[0] + "'");
        if (tok.size() != static_cast<std::size_t>(1 + 2 * k))
            throw ParseError(lineno, "expected " + std::to_string(2 * k) + " coordinates, got " +
                                         std::to_string(tok.size() - 1));
        Polyline pl;
        for (int i = 0; i < k; ++i) {
            Point p;
            if (!parse_number(tok[1 + 2 * i], p.x) || !parse_number(tok[2 + 2 * i], p.y))
                throw ParseError(lineno, "bad coordinate");
            if (!(p.x >= 0 && p.x <= 1 && p.y >= 0 && p.y <= 1))
                throw ParseError(lineno, "coordinate out of unit square");
            pl.push_back(p);
        }
        font.glyphs[current].push_back(std::move(pl));
        --remaining;
    }
    if (!have_header) throw ParseError(lineno, "missing 'strokefont' header");
    if (remaining != 0) throw ParseError(lineno, "unexpected end of file inside a glyph");
    return font;
}

std::string format_stroke_font(const StrokeFont& font) {
    font.validate();
    std::ostringstream os;
    os << "strokefont v1 " << font.name << ' ' << fmt_real(font.default_thickness) << '\n';
    for (const auto& [c, lines] : font.glyphs) {
        os << "glyph " << char_token(c) << ' ' << lines.size() << '\n';
        for (const auto& pl : lines) {
            os << pl.size();
            for (const auto& p : pl) os << ' ' << fmt_real(p.x) << ' ' << fmt_real(p.y);
            os << '\n';
        }
    }
    return os.str();
}

StrokeFont load_stroke_font(const fs::path& path) { return parse_stroke_font(read_text(path)); }

void save_stroke_font(const StrokeFont& font, const fs::path& path) {
    write_text_atomic(path, format_stroke_font(font));
}

fs::path asset_dir() {
    if (const char* env = std::getenv("DSF_ASSET_DIR"); env && *env) return env;
    return DSF_ASSET_DIR;
}

std::vector<std::string> bundled_font_names() {
    return {"mono-a", "mono-bold", "mono-italic", "mono-narrow", "mono-wide"};
}

FontRef load_bundled_font(const std::string& name) {
    const auto path = asset_dir() / "fonts" / (name + ".sf");
    if (!fs::exists(path)) throw ConfigError("no bundled font named '" + name + "'");
    return std::make_shared<const StrokeFont>(load_stroke_font(path));
}

std::vector<FontRef> load_bundled_fonts() {
    std::vector<FontRef> out;
    for (const auto& n : bundled_font_names()) out.push_back(load_bundled_font(n));
    return out;
}

FontRef resolve_font(const std::string& path_or_name) {
    if (fs::exists(path_or_name) && fs::is_regular_file(path_or_name))
        return std::make_shared<const StrokeFont>(load_stroke_font(path_or_name));
    return load_bundled_font(path_or_name);
}

// ---------------------------------------------------------------------------
// Rendering

void GlyphSpec::validate() const {
    if (text.empty()) throw ArgumentError("glyph text is empty");
    if (!font) throw ArgumentError("glyph spec has no font");
    if (image_size < 16) throw ArgumentError("image_size must be >= 16");
    if (foreground == background) throw ArgumentError("foreground equals background");
    if (!(thickness_scale > 0)) throw ArgumentError("thickness_scale must be positive");
    for (char c : text) font->glyph(c);
}

namespace {

StrokeLayout layout_impl(const GlyphSpec& spec, int width, int height, int skip_index) {
    spec.validate();
    if (width < 1 || height < 1) throw ArgumentError("canvas must be non-empty");
    StrokeLayout out;
    out.width = width;
    out.height = height;
    const Real n = static_cast<Real>(spec.text.size());
    const Real s = spec.slant;
    const Real frame_w = n + std::abs(s);
    const Real scale = std::min(static_cast<Real>(width) / frame_w, static_cast<Real>(height));
    const Real xmin = -std::abs(s) / 2;
    const Real off_x = (static_cast<Real>(width) - frame_w * scale) / 2 - xmin * scale;
    const Real off_y = (static_cast<Real>(height) - scale) / 2;
    out.radius = spec.font->default_thickness * spec.thickness_scale * scale / 2;

    auto map = [&](Point p, std::size_t cell) {
        const Real x = p.x + static_cast<Real>(cell) + s * (Real(0.5) - p.y);
        return Point{off_x + x * scale, off_y + p.y * scale};
    };
    for (std::size_t i = 0; i < spec.text.size(); ++i) {
        if (static_cast<int>(i) == skip_index) continue;
        for (const auto& pl : spec.font->glyph(spec.text[i])) {
            if (pl.size() == 1) {
                const Point p = map(pl[0], i);
                out.segments.push_back({p, p});
            }
            for (std::size_t k = 1; k < pl.size(); ++k)
                out.segments.push_back({map(pl[k - 1], i), map(pl[k], i)});
        }
    }
    return out;
}

Real seg_dist2(Real px, Real py, const StrokeLayout::Segment& s) {
    const Real dx = s.b.x - s.a.x, dy = s.b.y - s.a.y;
    const Real len2 = dx * dx + dy * dy;
    Real t = 0;
    if (len2 > 0) t = std::clamp(((px - s.a.x) * dx + (py - s.a.y) * dy) / len2, Real(0), Real(1));
    const Real ex = s.a.x + t * dx - px, ey = s.a.y + t * dy - py;
    return ex * ex + ey * ey;
}

Tensor paint(const Tensor& coverage, Rgb fg, Rgb bg) {
    const int H = coverage.dim(0), W = coverage.dim(1);
    Tensor img = solid_image(H, W, bg);
    auto d = img.mutable_data();
    const auto cov = coverage.data();
    const std::size_t plane = cov.size();
    const Real fgc[3] = {fg.r, fg.g, fg.b}, bgc[3] = {bg.r, bg.g, bg.b};
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i) d[c * plane + i] = bgc[c] + (fgc[c] - bgc[c]) * cov[i];
    return img;
}

} // namespace

StrokeLayout layout_text(const GlyphSpec& spec, int width, int height) {
    return layout_impl(spec, width, height, -1);
}

Tensor stroke_coverage(const StrokeLayout& layout, int samples_per_axis) {
    if (samples_per_axis < 1 || samples_per_axis > 8)
        throw ArgumentError("samples_per_axis must lie in [1, 8]");
    const int W = layout.width, H = layout.height, n = samples_per_axis;
    std::vector<std::uint64_t> bits(static_cast<std::size_t>(W) * H, 0);
    const Real r2 = layout.radius * layout.radius;
    for (const auto& s : layout.segments) {
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(s.a.x, s.b.x) - layout.radius)));
        const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max(s.a.x, s.b.x) + layout.radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(s.a.y, s.b.y) - layout.radius)));
        const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max(s.a.y, s.b.y) + layout.radius)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                std::uint64_t& m = bits[static_cast<std::size_t>(y) * W + x];
                for (int sy = 0; sy < n; ++sy)
                    for (int sx = 0; sx < n; ++sx) {
                        const std::uint64_t bit = std::uint64_t(1) << (sy * n + sx);
                        if (m & bit) continue;
                        const Real px = x + (sx + Real(0.5)) / n, py = y + (sy + Real(0.5)) / n;
                        if (seg_dist2(px, py, s) <= r2) m |= bit;
                    }
            }
    }
    std::vector<Real> cov(bits.size());
    const Real inv = Real(1) / static_cast<Real>(n * n);
    for (std::size_t i = 0; i < bits.size(); ++i) cov[i] = static_cast<Real>(std::popcount(bits[i])) * inv;
    return Tensor::from({H, W}, std::move(cov));
}

Tensor rasterize_canvas(const GlyphSpec& spec, int width, int height) {
    return paint(stroke_coverage(layout_text(spec, width, height)), spec.foreground, spec.background);
}

Tensor rasterize(const GlyphSpec& spec) {
    return rasterize_canvas(spec, spec.image_size, spec.image_size);
}

// ---------------------------------------------------------------------------
// Augmentation

void AugmentPolicy::validate() const {
    if (font_pool.empty()) throw ConfigError("augmentation font pool is empty");
    for (const auto& f : font_pool)
        if (!f) throw ConfigError("augmentation font pool contains a null font");
    if (mode == AugmentMode::single_font && font_pool.size() != 1)
        throw ConfigError("single_font mode needs exactly one font, got " +
                          std::to_string(font_pool.size()));
    if (mode == AugmentMode::multi_font && font_pool.size() < 2)
        throw ConfigError("multi_font mode needs at least two fonts");
    if (image_size < 16) throw ConfigError("image_size must be >= 16");
}

Rgb random_color(Rng& rng) {
    const Real h = static_cast<Real>(rng.uniform());
    const Real s = static_cast<Real>(rng.uniform());
    const Real v = static_cast<Real>(rng.uniform(0.3, 1.0));
    const Real h6 = h * 6;
    const int sector = std::min(5, static_cast<int>(h6));
    const Real f = h6 - sector;
    const Real p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
    }
}

Tensor sample_augmented_glyph(const AugmentPolicy& policy, const std::string& text, Rng& rng) {
    policy.validate();
    FontRef font = policy.font_pool.front();
    if (policy.mode == AugmentMode::multi_font) font = policy.font_pool[rng.below(policy.font_pool.size())];
    Rgb color = policy.fixed_color;
    if (policy.randomize_color) {
        color = random_color(rng);
        // Value >= 0.3 guarantees contrast against black; other backgrounds may collide.
        if (color == policy.background) color = Rgb{1 - color.r, 1 - color.g, 1 - color.b};
    }
    GlyphSpec spec{text, font, policy.image_size, color, policy.background, policy.thickness_scale,
                   policy.slant};
    return rasterize(spec);
}

// ---------------------------------------------------------------------------
// Segmentation and composition

namespace {

Real linf_distance(const Tensor& image, std::size_t i, std::size_t plane, Rgb bg) {
    const auto d = image.data();
    return std::max({std::abs(d[i] - bg.r), std::abs(d[plane + i] - bg.g),
                     std::abs(d[2 * plane + i] - bg.b)});
}

} // namespace

Tensor segment_foreground(const Tensor& image, Rgb background, Real tau) {
    check_image(image);
    const int H = image.dim(1), W = image.dim(2);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<Real> mask(plane);
    for (std::size_t i = 0; i < plane; ++i)
        mask[i] = linf_distance(image, i, plane, background) > tau ? Real(1) : Real(0);
    return Tensor::from({H, W}, std::move(mask));
}

Rgb dominant_color(const Tensor& image, Rgb background) {
    check_image(image);
    const std::size_t plane = static_cast<std::size_t>(image.dim(1)) * image.dim(2);
    Real maxd = 0;
    for (std::size_t i = 0; i < plane; ++i) maxd = std::max(maxd, linf_distance(image, i, plane, background));
    if (maxd <= 0) return Rgb{1 - background.r, 1 - background.g, 1 - background.b};

    const auto d = image.data();
    auto byte = [](Real v) { return static_cast<int>(std::lround(std::clamp(v, Real(0), Real(1)) * 255)); };
    std::map<int, int> coarse;
    std::map<int, std::map<int, int>> fine;
    for (std::size_t i = 0; i < plane; ++i) {
        if (linf_distance(image, i, plane, background) <= maxd / 2) continue;
        const int r = byte(d[i]), g = byte(d[plane + i]), b = byte(d[2 * plane + i]);
        const int cbin = ((r >> 5) << 6) | ((g >> 5) << 3) | (b >> 5);
        ++coarse[cbin];
        ++fine[cbin][(r << 16) | (g << 8) | b];
    }
    auto best = std::max_element(coarse.begin(), coarse.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    const auto& colors = fine[best->first];
    auto pick = std::max_element(colors.begin(), colors.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    const int key = pick->first;
    return Rgb{static_cast<Real>((key >> 16) & 255) / 255, static_cast<Real>((key >> 8) & 255) / 255,
               static_cast<Real>(key & 255) / 255};
}

Tensor compose_word(const Tensor& stylized, int position, const GlyphSpec& word_spec,
                    const ComposeOptions& options) {
    check_image(stylized);
    word_spec.validate();
    const int n = static_cast<int>(word_spec.text.size());
    if (position < 0 || position >= n)
        throw ArgumentError("position " + std::to_string(position) + " out of range for '" +
                            word_spec.text + "'");
    if (options.padding < 0) throw ArgumentError("padding must be >= 0");
    const int S = word_spec.image_size;
    const Rgb bg = word_spec.background;
    const Rgb color = options.letter_color ? *options.letter_color : dominant_color(stylized, bg);

    GlyphSpec plain = word_spec;
    plain.foreground = color == bg ? Rgb{1 - bg.r, 1 - bg.g, 1 - bg.b} : color;
    const Tensor cov = stroke_coverage(layout_impl(plain, n * S, S, position));
    const Tensor strip = paint(cov, plain.foreground, bg);
    const Tensor cell = resize_bilinear(stylized, S, S);

    const int pad = options.padding;
    const int H = S + 2 * pad, W = n * S + 2 * pad;
    Tensor out = solid_image(H, W, bg);
    auto o = out.mutable_data();
    const auto sd = strip.data(), cd = cell.data();
    const std::size_t oplane = static_cast<std::size_t>(H) * W;
    const std::size_t splane = static_cast<std::size_t>(S) * n * S;
    const std::size_t cplane = static_cast<std::size_t>(S) * S;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < n * S; ++x) {
                const int cellx = x - position * S;
                const Real v = (cellx >= 0 && cellx < S)
                                   ? cd[c * cplane + static_cast<std::size_t>(y) * S + cellx]
                                   : sd[c * splane + static_cast<std::size_t>(y) * n * S + x];
                o[c * oplane + static_cast<std::size_t>(y + pad) * W + x + pad] = v;
            }
    return out;
}

} // namespace dsf
