#include "dsf/rank.hpp"

#include "dsf/error.hpp"
#include "dsf/image.hpp"
#include "dsf/optim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace dsf {

int glyph_class_index(char c) {
    const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    const auto pos = kGlyphClasses.find(u);
    return pos == std::string_view::npos ? -1 : static_cast<int>(pos);
}

namespace {

Real median(std::vector<Real> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

Rgb border_background(const Tensor& image) {
    const int H = image.dim(1), W = image.dim(2);
    std::vector<Real> ch[3];
    const auto d = image.data();
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (y != 0 && y != H - 1 && x != 0 && x != W - 1) continue;
            for (int c = 0; c < 3; ++c) ch[c].push_back(d[(static_cast<std::size_t>(c) * H + y) * W + x]);
        }
    return {median(ch[0]), median(ch[1]), median(ch[2])};
}

/// L-infinity distance of every pixel from `bg`, shape [1 x H x W].
Tensor distance_map(const Tensor& image, Rgb bg) {
    check_image(image);
    const std::size_t HW = static_cast<std::size_t>(image.dim(1)) * image.dim(2);
    const auto d = image.data();
    std::vector<Real> out(HW);
    for (std::size_t i = 0; i < HW; ++i)
        out[i] = std::max({std::abs(d[i] - bg.r), std::abs(d[HW + i] - bg.g),
                           std::abs(d[2 * HW + i] - bg.b)});
    return Tensor::from({1, image.dim(1), image.dim(2)}, std::move(out));
}

} // namespace

Tensor ink_map(const Tensor& image, int size) {
    const Tensor dist = resize_bilinear(distance_map(image, border_background(image)), size, size);
    std::vector<Real> v(dist.data().begin(), dist.data().end());
    const Real mx = *std::max_element(v.begin(), v.end());
    if (mx > Real(1e-6))
        for (auto& x : v) x /= mx;
    return Tensor::from({1, size, size}, std::move(v));
}

GlyphClassifier GlyphClassifier::init(const GlyphClassifierConfig& cfg, Rng& rng) {
    if (cfg.input_size % 8 != 0 || cfg.input_size < 8)
        throw ConfigError("classifier input_size must be a multiple of 8");
    GlyphClassifier c;
    c.cfg_ = cfg;
    const int w = cfg.width;
    c.conv1_ = Conv2d::make(1, w, 3, 1, 1, rng);
    c.conv2_ = Conv2d::make(w, 2 * w, 3, 2, 1, rng);
    c.conv3_ = Conv2d::make(2 * w, 4 * w, 3, 2, 1, rng);
    c.conv4_ = Conv2d::make(4 * w, 4 * w, 3, 2, 1, rng);
    const int side = cfg.input_size / 8;
    c.out_ = Linear::make(4 * w * side * side, kNumGlyphClasses, rng, Real(0.5));
    return c;
}

Tensor GlyphClassifier::logits(const Tensor& ink) const {
    Tensor h = silu(conv1_(ink));
    h = silu(conv2_(h));
    h = silu(conv3_(h));
    h = silu(conv4_(h));
    return out_(reshape(h, {static_cast<int>(h.numel())}));
}

std::vector<Real> GlyphClassifier::predict(const Tensor& image) const {
    NoGradGuard ng;
    const Tensor lp = log_softmax(logits(ink_map(image, cfg_.input_size)));
    std::vector<Real> p(lp.numel());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(lp[i]);
    return p;
}

int GlyphClassifier::predict_class(const Tensor& image) const {
    const auto p = predict(image);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

NamedParams GlyphClassifier::params() const {
    NamedParams p;
    conv1_.collect(p, "conv1");
    conv2_.collect(p, "conv2");
    conv3_.collect(p, "conv3");
    conv4_.collect(p, "conv4");
    out_.collect(p, "out");
    return p;
}

namespace {

Rgb contrasting_pair_member(Rng& rng, const Rgb& other) {
    for (;;) {
        const Rgb c{static_cast<Real>(rng.uniform()), static_cast<Real>(rng.uniform()),
                    static_cast<Real>(rng.uniform())};
        const Real d = std::max({std::abs(c.r - other.r), std::abs(c.g - other.g), std::abs(c.b - other.b)});
        if (d >= Real(0.4)) return c;
    }
}

Tensor shift_image(const Tensor& image, int dx, int dy, Rgb fill) {
    const int H = image.dim(1), W = image.dim(2);
    Tensor out = solid_image(H, W, fill);
    auto o = out.mutable_data();
    const auto d = image.data();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const int sy = y - dy, sx = x - dx;
                if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                o[(static_cast<std::size_t>(c) * H + y) * W + x] =
                    d[(static_cast<std::size_t>(c) * H + sy) * W + sx];
            }
    return out;
}

} // namespace

Tensor random_glyph_example(const std::vector<FontRef>& fonts, char c, Rng& rng) {
    GlyphSpec spec;
    spec.text = std::string(1, c);
    spec.font = fonts[rng.below(fonts.size())];
    spec.thickness_scale = static_cast<Real>(rng.uniform(0.7, 1.4));
    spec.slant = static_cast<Real>(rng.uniform(-0.2, 0.25));
    switch (rng.below(3)) {
    case 0:
        spec.foreground = {0, 0, 0};
        spec.background = {1, 1, 1};
        break;
    case 1:
        spec.background = {0, 0, 0};
        spec.foreground = random_color(rng);
        break;
    default:
        spec.background = {static_cast<Real>(rng.uniform()), static_cast<Real>(rng.uniform()),
                           static_cast<Real>(rng.uniform())};
        spec.foreground = contrasting_pair_member(rng, spec.background);
        break;
    }
    Tensor img = rasterize(spec);
    const int dx = static_cast<int>(rng.below(9)) - 4;
    const int dy = static_cast<int>(rng.below(9)) - 4;
    img = shift_image(img, dx, dy, spec.background);
    if (rng.uniform() < 0.5) img = gaussian_blur(img, static_cast<Real>(rng.uniform(0.3, 1.5)));
    const double noise = rng.uniform(0.0, 0.05);
    auto v = img.mutable_data();
    for (auto& x : v) x = std::clamp(static_cast<Real>(x + noise * rng.normal()), Real(0), Real(1));
    return img;
}

GlyphClassifier train_glyph_classifier(const std::vector<FontRef>& fonts,
                                       const GlyphClassifierConfig& cfg, Rng& rng) {
    if (fonts.empty()) throw ConfigError("glyph classifier needs at least one font");
    for (const auto& f : fonts)
        for (char c : kGlyphClasses)
            if (!f->has(c))
                throw ConfigError("font '" + f->name + "' lacks glyph '" + std::string(1, c) + "'");
    if (cfg.train_steps < 1 || cfg.batch_size < 1 || !(cfg.lr > 0))
        throw ConfigError("classifier training needs positive steps, batch size and lr");

    GlyphClassifier clf = GlyphClassifier::init(cfg, rng);
    Adam opt(tensors_of(clf.params()));
    int example = 0;
    for (int step = 0; step < cfg.train_steps; ++step) {
        std::vector<Tensor> losses;
        for (int b = 0; b < cfg.batch_size; ++b, ++example) {
            if (cfg.noise_every > 0 && example % cfg.noise_every == cfg.noise_every - 1) {
                // Pure noise should not look like any character.
                std::vector<Real> v(3 * 64 * 64);
                for (auto& x : v) x = static_cast<Real>(rng.uniform());
                const Tensor lp = log_softmax(clf.logits(ink_map(Tensor::from({3, 64, 64}, std::move(v)), cfg.input_size)));
                losses.push_back(neg(mean(lp)));
                continue;
            }
            const int label = static_cast<int>(rng.below(kNumGlyphClasses));
            const Tensor img = random_glyph_example(fonts, kGlyphClasses[label], rng);
            const Tensor lp = log_softmax(clf.logits(ink_map(img, cfg.input_size)));
            losses.push_back(neg(slice(lp, static_cast<std::size_t>(label), 1)));
        }
        Tensor loss = scale(sum_all(losses), Real(1) / static_cast<Real>(losses.size()));
        if (!std::isfinite(loss.item())) throw TrainingError("classifier loss is not finite");
        loss.backward();
        opt.step(cfg.lr);
    }
    clf.holdout_accuracy = clean_render_accuracy(clf, fonts);
    return clf;
}

Real clean_render_accuracy(const GlyphClassifier& clf, const std::vector<FontRef>& fonts) {
    if (fonts.empty()) throw ArgumentError("no fonts to evaluate");
    int correct = 0, total = 0;
    for (const auto& f : fonts)
        for (int k = 0; k < kNumGlyphClasses; ++k) {
            GlyphSpec spec;
            spec.text = std::string(1, kGlyphClasses[k]);
            spec.font = f;
            correct += clf.predict_class(rasterize(spec)) == k;
            ++total;
        }
    return static_cast<Real>(correct) / static_cast<Real>(total);
}

Real glyph_score(const GlyphClassifier& clf, const Tensor& image, char target, Real blur_sigma) {
    const int k = glyph_class_index(target);
    if (k < 0) throw ArgumentError(std::string("character '") + target + "' is not in the class set");
    if (!(blur_sigma >= 0)) throw ArgumentError("blur sigma must be >= 0");
    const Tensor input = blur_sigma > 0 ? gaussian_blur(image, blur_sigma) : image;
    return clf.predict(input)[static_cast<std::size_t>(k)];
}

Real ocr_accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
    if (predicted.size() != labels.size())
        throw ArgumentError("ocr_accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                            std::to_string(labels.size()) + " labels");
    if (labels.empty()) throw ArgumentError("ocr_accuracy: empty batch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
    return Real(100) * static_cast<Real>(correct) / static_cast<Real>(labels.size());
}

Real ocr_accuracy(const std::vector<Tensor>& images, const std::string& labels,
                  const GlyphClassifier& clf, Real blur_sigma) {
    if (images.size() != labels.size())
        throw ArgumentError("ocr_accuracy: " + std::to_string(images.size()) + " images for " +
                            std::to_string(labels.size()) + " labels");
    if (!(blur_sigma >= 0)) throw ArgumentError("blur sigma must be >= 0");
    std::vector<int> pred, want;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const int k = glyph_class_index(labels[i]);
        if (k < 0) throw ArgumentError(std::string("label '") + labels[i] + "' is not in the class set");
        want.push_back(k);
        pred.push_back(clf.predict_class(blur_sigma > 0 ? gaussian_blur(images[i], blur_sigma) : images[i]));
    }
    return ocr_accuracy(pred, want);
}

StyleScorer::StyleScorer(const StyleScorerConfig& cfg) : cfg_(cfg) {
    Rng rng = Rng::stream(cfg.seed, "style-features");
    const int c1 = cfg.channels1, c2 = cfg.channels2;
    std::vector<Real> k1(static_cast<std::size_t>(c1) * 27);
    for (int o = 0; o < c1; ++o) {
        Real m = 0;
        for (int i = 0; i < 27; ++i) m += k1[o * 27 + i] = static_cast<Real>(rng.normal() / std::sqrt(27.0));
        // Zero-mean filters respond to texture and edges, not flat colour.
        for (int i = 0; i < 27; ++i) k1[o * 27 + i] -= m / 27;
    }
    k1_ = Tensor::from({c1, 3, 3, 3}, std::move(k1));
    std::vector<Real> k2(static_cast<std::size_t>(c2) * c1 * 9);
    for (auto& x : k2) x = static_cast<Real>(rng.normal() / std::sqrt(9.0 * c1));
    k2_ = Tensor::from({c2, c1, 3, 3}, std::move(k2));
}

std::vector<Real> StyleScorer::features(const Tensor& image) const {
    check_image(image);
    NoGradGuard ng;
    const Tensor x = resize_bilinear(image, cfg_.input_size, cfg_.input_size);
    const Tensor a1 = relu(conv2d(x, k1_, 1, 1));
    const Tensor a2 = relu(conv2d(a1, k2_, 2, 1));
    std::vector<Real> f;
    for (const Tensor* t : {&x, &a1, &a2}) {
        const int C = t->dim(0);
        const std::size_t n = t->numel() / static_cast<std::size_t>(C);
        const auto d = t->data();
        for (int c = 0; c < C; ++c) {
            Real s = 0, s2 = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const Real v = d[c * n + i];
                s += v;
                s2 += v * v;
            }
            const Real m = s / static_cast<Real>(n);
            f.push_back(m);
            f.push_back(std::sqrt(std::max(Real(0), s2 / static_cast<Real>(n) - m * m)));
        }
    }
    return f;
}

std::vector<Real> StyleScorer::embed(const Tensor& image) const {
    std::vector<Real> f = features(image);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = (f[i] - center_[i]) / spread_[i];
    return f;
}

void StyleScorer::fit(const std::vector<Tensor>& corpus, const std::vector<Tensor>& reference) {
    if (corpus.empty()) throw ArgumentError("style scorer needs a non-empty corpus");
    std::vector<std::vector<Real>> fc, fr;
    for (const auto& im : corpus) fc.push_back(features(im));
    for (const auto& im : reference) fr.push_back(features(im));
    const std::size_t D = fc[0].size();
    center_.assign(D, 0);
    for (const auto& f : fr)
        for (std::size_t i = 0; i < D; ++i) center_[i] += f[i] / static_cast<Real>(fr.size());
    spread_.assign(D, 0);
    const Real n = static_cast<Real>(fc.size() + fr.size());
    for (const auto* set : {&fc, &fr})
        for (const auto& f : *set)
            for (std::size_t i = 0; i < D; ++i) spread_[i] += (f[i] - center_[i]) * (f[i] - center_[i]) / n;
    for (auto& s : spread_) s = std::sqrt(s) + Real(1e-8);
    centroid_.assign(D, 0);
    for (const auto& im : corpus) {
        const auto e = embed(im);
        for (std::size_t i = 0; i < D; ++i) centroid_[i] += e[i] / static_cast<Real>(corpus.size());
    }
}

Real StyleScorer::score(const Tensor& image) const {
    if (!fitted()) throw ContractError("style scorer has not been fitted");
    const auto e = embed(image);
    Real dot = 0, ne = 0, nc = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        dot += e[i] * centroid_[i];
        ne += e[i] * e[i];
        nc += centroid_[i] * centroid_[i];
    }
    if (ne <= 0 || nc <= 0) return Real(0.5);
    const Real cosine = dot / std::sqrt(ne * nc);
    return std::clamp((cosine + 1) / 2, Real(0), Real(1));
}

Real style_score(const StyleScorer& scorer, const Tensor& image) { return scorer.score(image); }

bool dominates(const Candidate& a, const Candidate& b) {
    return a.glyph_score >= b.glyph_score && a.style_score >= b.style_score &&
           (a.glyph_score > b.glyph_score || a.style_score > b.style_score);
}

Ranking rank_candidates(const std::vector<Candidate>& cs) {
    if (cs.empty()) throw ArgumentError("rank_candidates: no candidates");
    for (const auto& c : cs)
        if (!(c.glyph_score >= 0) || !(c.style_score >= 0))
            throw ArgumentError("rank_candidates: candidate scores not populated");
    Ranking r;
    r.order.resize(cs.size());
    std::iota(r.order.begin(), r.order.end(), 0);
    std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t i, std::size_t j) {
        const Real si = cs[i].glyph_score + cs[i].style_score;
        const Real sj = cs[j].glyph_score + cs[j].style_score;
        if (si != sj) return si > sj;
        // Equal sums after rounding: a dominating candidate still goes first.
        if (cs[i].glyph_score != cs[j].glyph_score) return cs[i].glyph_score > cs[j].glyph_score;
        return cs[i].style_score > cs[j].style_score;
    });
    for (std::size_t i : r.order) {
        bool dominated = false;
        for (std::size_t j = 0; j < cs.size() && !dominated; ++j) dominated = j != i && dominates(cs[j], cs[i]);
        if (!dominated) r.pareto_front.push_back(i);
    }
    return r;
}

Tensor adaptive_foreground(const Tensor& image, Rgb background) {
    const Tensor dist = distance_map(image, background);
    const auto d = dist.data();
    const int H = image.dim(1), W = image.dim(2);
    const Real mx = *std::max_element(d.begin(), d.end());
    std::vector<Real> mask(d.size(), 0);
    if (mx > Real(1e-6)) {
        constexpr int kBins = 64;
        std::vector<double> hist(kBins, 0);
        for (Real v : d) hist[std::min(kBins - 1, static_cast<int>(v / mx * kBins))] += 1;
        const double total = static_cast<double>(d.size());
        double sum_all_bins = 0;
        for (int i = 0; i < kBins; ++i) sum_all_bins += i * hist[i];
        double w_b = 0, s_b = 0, best = -1;
        int best_bin = 0;
        for (int i = 0; i < kBins; ++i) {
            w_b += hist[i];
            if (w_b == 0) continue;
            const double w_f = total - w_b;
            if (w_f == 0) break;
            s_b += i * hist[i];
            const double m_b = s_b / w_b, m_f = (sum_all_bins - s_b) / w_f;
            const double between = w_b * w_f * (m_b - m_f) * (m_b - m_f);
            if (between > best) {
                best = between;
                best_bin = i;
            }
        }
        const Real thr = static_cast<Real>(best_bin + 1) * mx / kBins;
        for (std::size_t i = 0; i < d.size(); ++i) mask[i] = d[i] > thr ? Real(1) : Real(0);
    }
    return Tensor::from({H, W}, std::move(mask));
}

Real mask_iou(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("mask_iou: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const bool x = a[i] > Real(0.5), y = b[i] > Real(0.5);
        inter += x && y;
        uni += x || y;
    }
    return uni == 0 ? Real(1) : static_cast<Real>(inter) / static_cast<Real>(uni);
}

Tensor glyph_mask(const GlyphSpec& spec) {
    spec.validate();
    const Tensor cov = stroke_coverage(layout_text(spec, spec.image_size, spec.image_size));
    std::vector<Real> m(cov.numel());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = cov[i] > Real(0.5) ? Real(1) : Real(0);
    return Tensor::from(cov.shape(), std::move(m));
}

Real mean_pairwise_l2(const std::vector<Tensor>& images) {
    if (images.size() < 2) throw ArgumentError("diversity needs at least two images");
    Real total = 0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < images.size(); ++a)
        for (std::size_t b = a + 1; b < images.size(); ++b) {
            if (images[a].shape() != images[b].shape())
                throw DimensionError("diversity: images differ in shape");
            Real s = 0;
            for (std::size_t i = 0; i < images[a].numel(); ++i) {
                const Real d = images[a][i] - images[b][i];
                s += d * d;
            }
            total += std::sqrt(s);
            ++pairs;
        }
    return total / static_cast<Real>(pairs);
}

std::string eval_report_csv(const std::vector<EvalRow>& rows) {
    std::string out = "method_tag,ocr,ocr_blurred,style_score\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.6f\n", r.method_tag.c_str(),
                      static_cast<double>(r.ocr), static_cast<double>(r.ocr_blurred),
                      static_cast<double>(r.style_score));
        out += buf;
    }
    return out;
}

} // namespace dsf
