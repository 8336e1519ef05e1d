#include "dsf/pipeline.hpp"

#include "dsf/error.hpp"
#include "dsf/image.hpp"
#include "dsf/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace dsf {

namespace fs = std::filesystem;

namespace {

void say(const Progress& p, const std::string& msg) {
    if (p) p(msg);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

char single_letter(const RunConfig& cfg) {
    if (cfg.text.size() != 1)
        throw ConfigError("text: scoring needs a single letter, got '" + cfg.text + "'");
    if (glyph_class_index(cfg.text[0]) < 0)
        throw ConfigError("text: '" + cfg.text + "' is not in the classifier's class set");
    return cfg.text[0];
}

std::vector<Tensor> sample_images(const LatentCodec& codec, const Generator& g, const NoiseSchedule& sched,
                                  const SampleSettings& settings, int n, std::uint64_t seed,
                                  std::vector<std::uint64_t>* chain_seeds = nullptr) {
    if (n < 1) throw ArgumentError("number of samples must be >= 1");
    if (settings.sampler != "ddim" && settings.sampler != "ddpm")
        throw ArgumentError("unknown sampler '" + settings.sampler + "'");
    const EpsFn eps = eps_fn(g.unet, g.cond);
    Rng stream = Rng::stream(seed, "sampler");
    std::vector<Tensor> out;
    for (int i = 0; i < n; ++i) {
        const std::uint64_t sub = stream.next_u64();
        if (chain_seeds) chain_seeds->push_back(sub);
        Rng chain(sub);
        Tensor z;
        if (settings.sampler == "ddim") {
            z = sample_ddim(eps, sched, codec.latent_shape(), settings.steps, chain);
        } else {
            z = ddpm_chain(eps, sched, randn(codec.latent_shape(), chain), chain);
        }
        NoGradGuard ng;
        out.push_back(codec.decode(z));
    }
    return out;
}

std::map<std::string, std::uint64_t> read_sample_manifest(const fs::path& path) {
    std::map<std::string, std::uint64_t> seeds;
    if (!fs::exists(path)) return seeds;
    std::istringstream in(read_text(path));
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        seeds[line.substr(0, comma)] = std::stoull(line.substr(comma + 1));
    }
    return seeds;
}

Tensor sheet(const std::vector<Tensor>& images) {
    const int cols = static_cast<int>(std::min<std::size_t>(images.size(), 8));
    return tile_images(images, cols, Rgb{0.5, 0.5, 0.5});
}

} // namespace

std::vector<fs::path> list_images(const fs::path& dir, std::size_t min_count) {
    if (!fs::is_directory(dir)) throw ConfigError("style_dir: '" + dir.string() + "' is not a directory");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    if (out.size() < min_count)
        throw ConfigError("style_dir: '" + dir.string() + "' holds " + std::to_string(out.size()) +
                          " PNG images, need " + std::to_string(min_count));
    return out;
}

std::vector<Tensor> load_style_images(const fs::path& dir, std::size_t min_count) {
    std::vector<Tensor> out;
    for (const auto& p : list_images(dir, min_count)) {
        Tensor img = read_png(p);
        if (img.dim(1) != 64 || img.dim(2) != 64) img = resize_bilinear(img, 64, 64);
        out.push_back(img);
    }
    return out;
}

std::vector<Tensor> codec_corpus(const RunConfig& cfg) {
    std::vector<Tensor> corpus = load_style_images(cfg.style_path());
    AugmentPolicy policy;
    policy.mode = AugmentMode::multi_font;
    policy.font_pool = load_bundled_fonts();
    if (!cfg.fonts.empty())
        for (const auto& f : cfg.font_pool()) policy.font_pool.push_back(f);
    Rng rng = Rng::stream(cfg.seed, "codec-corpus");
    for (int i = 0; i < cfg.codec_glyph_count; ++i) {
        const char c = i < static_cast<int>(cfg.text.size())
                           ? cfg.text[i]
                           : kGlyphClasses[rng.below(kGlyphClasses.size())];
        corpus.push_back(sample_augmented_glyph(policy, std::string(1, c), rng));
    }
    return corpus;
}

LatentCodec run_train_codec(const RunConfig& cfg, const Progress& progress) {
    cfg.validate();
    const std::vector<Tensor> corpus = codec_corpus(cfg);
    say(progress, "training codec on " + std::to_string(corpus.size()) + " images");
    Rng rng = Rng::stream(cfg.seed, "codec");
    LatentCodec codec = train_codec(corpus, cfg.codec_config(), cfg.codec_train_config(), rng);
    say(progress, "codec reconstruction MSE " + fmt("%.5f", codec.training_log.front()) + " -> " +
                      fmt("%.5f", codec.training_log.back()));
    ensure_dir(cfg.output_dir);
    ModelBundle b;
    b.codec = codec;
    b.config_text = format_config(cfg);
    save_bundle(b, fs::path(cfg.output_dir) / run_files::kCodec);
    return codec;
}

LatentCodec load_codec(const fs::path& bundle_path) {
    if (!fs::exists(bundle_path))
        throw ConfigError("codec checkpoint '" + bundle_path.string() + "' is missing; run train-codec first");
    ModelBundle b = load_bundle(bundle_path);
    if (!b.codec) throw FormatError("'" + bundle_path.string() + "' holds no codec");
    return *b.codec;
}

ModelBundle train_dsfusion(const fs::path& style_dir, const AugmentPolicy& glyph_policy,
                           const std::string& text, const FusionTrainConfig& cfg, const FusionSetup& setup,
                           const LatentCodec& codec, const fs::path& out_dir, const std::string& config_echo,
                           const Progress& progress) {
    cfg.validate();
    const std::vector<Tensor> style =
        load_style_images(style_dir, static_cast<std::size_t>(cfg.style_image_count));
    say(progress, "training on " + std::to_string(cfg.style_image_count) + " style images for " +
                      std::to_string(cfg.epochs) + " epochs");
    FusionModel model = train_fusion(codec, style, glyph_policy, text, cfg, setup, [&](const EpochLosses& e) {
        if (progress && (e.epoch + 1) % 10 == 0)
            progress("epoch " + std::to_string(e.epoch + 1) + " l_diff " + fmt("%.5f", e.l_diff) +
                     " l_dis " + fmt("%.5f", e.l_dis));
    });
    ModelBundle b;
    b.codec = codec;
    b.generator = model.generator;
    b.discriminator = model.discriminator;
    b.schedule = setup.sched;
    b.config_text = config_echo;
    b.loss_log = model.log;
    ensure_dir(out_dir);
    write_text_atomic(out_dir / run_files::kLossCurve, loss_curve_csv(model.log));
    save_bundle(b, out_dir / run_files::kModel);
    return b;
}

ModelBundle run_train(const RunConfig& cfg, const Progress& progress) {
    cfg.validate();
    const LatentCodec codec = load_codec(fs::path(cfg.output_dir) / run_files::kCodec);
    return train_dsfusion(cfg.style_path(), cfg.augment_policy(), cfg.text, cfg.fusion_config(),
                          cfg.fusion_setup(), codec, cfg.output_dir, format_config(cfg), progress);
}

std::vector<Candidate> sample_candidates(const ModelBundle& bundle, const SampleSettings& settings, int n,
                                         std::uint64_t seed) {
    if (!bundle.codec || !bundle.generator || !bundle.schedule)
        throw FormatError("bundle lacks the codec, generator or schedule needed for sampling");
    std::vector<std::uint64_t> seeds;
    const auto images =
        sample_images(*bundle.codec, *bundle.generator, *bundle.schedule, settings, n, seed, &seeds);
    std::vector<Candidate> out;
    for (std::size_t i = 0; i < images.size(); ++i) {
        Candidate c;
        c.image = images[i];
        c.seed = seeds[i];
        out.push_back(c);
    }
    return out;
}

std::vector<Candidate> run_sample(const RunConfig& cfg, int n, std::uint64_t seed) {
    cfg.validate();
    const ModelBundle bundle = load_bundle(fs::path(cfg.output_dir) / run_files::kModel);
    const auto cands = sample_candidates(bundle, {cfg.sampler, cfg.sampler_steps}, n, seed);
    const fs::path dir = fs::path(cfg.output_dir) / run_files::kCandidates;
    ensure_dir(dir);
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().filename().string().rfind("candidate_", 0) == 0) fs::remove(e.path());
    std::string manifest = "file,seed\n";
    std::vector<Tensor> images;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "candidate_%02zu.png", i);
        write_png(dir / name, cands[i].image);
        manifest += std::string(name) + "," + std::to_string(cands[i].seed) + "\n";
        images.push_back(cands[i].image);
    }
    write_text_atomic(dir / "manifest.csv", manifest);
    write_png(fs::path(cfg.output_dir) / run_files::kContactSheet, sheet(images));
    return cands;
}

Scorers build_scorers(const RunConfig& cfg) {
    std::vector<FontRef> fonts = load_bundled_fonts();
    if (!cfg.fonts.empty())
        for (const auto& f : cfg.font_pool())
            if (std::none_of(fonts.begin(), fonts.end(), [&](const FontRef& g) { return g->name == f->name; }))
                fonts.push_back(f);
    GlyphClassifierConfig ccfg;
    ccfg.train_steps = cfg.classifier_steps;
    Rng crng = Rng::stream(cfg.seed, "classifier");
    Scorers s{train_glyph_classifier(fonts, ccfg, crng), StyleScorer()};

    const auto style = load_style_images(cfg.style_path(), static_cast<std::size_t>(cfg.style_image_count));
    const std::vector<Tensor> corpus(style.begin(), style.begin() + cfg.style_image_count);
    std::vector<Tensor> reference;
    Rng rrng = Rng::stream(cfg.seed, "scorer-reference");
    const AugmentPolicy policy = cfg.augment_policy();
    for (int i = 0; i < 8; ++i) reference.push_back(sample_augmented_glyph(policy, cfg.text, rrng));
    s.style.fit(corpus, reference);
    return s;
}

std::vector<RankedRow> run_rank(const RunConfig& cfg, const fs::path& scatter_csv) {
    cfg.validate();
    const char letter = single_letter(cfg);
    const fs::path dir = fs::path(cfg.output_dir) / run_files::kCandidates;
    if (!fs::is_directory(dir)) throw ConfigError("no candidates in '" + dir.string() + "'; run sample first");
    const auto files = list_images(dir, 1);
    const auto seeds = read_sample_manifest(dir / "manifest.csv");
    const Scorers scorers = build_scorers(cfg);

    std::vector<Candidate> cands;
    for (const auto& f : files) {
        Candidate c;
        c.image = read_png(f);
        c.glyph_score = glyph_score(scorers.classifier, c.image, letter, 0);
        c.style_score = style_score(scorers.style, c.image);
        const auto it = seeds.find(f.filename().string());
        c.seed = it == seeds.end() ? 0 : it->second;
        cands.push_back(c);
    }
    const Ranking ranking = rank_candidates(cands);
    std::vector<bool> front(cands.size(), false);
    for (std::size_t i : ranking.pareto_front) front[i] = true;

    std::vector<RankedRow> rows;
    std::string csv = "rank,file,seed,glyph_score,style_score,score_sum,pareto_front\n";
    std::string manifest;
    std::vector<Tensor> ordered;
    char buf[512];
    for (std::size_t r = 0; r < ranking.order.size(); ++r) {
        const std::size_t i = ranking.order[r];
        const Candidate& c = cands[i];
        const std::string file = files[i].filename().string();
        std::snprintf(buf, sizeof buf, "%zu,%s,%llu,%.6f,%.6f,%.6f,%d\n", r + 1, file.c_str(),
                      static_cast<unsigned long long>(c.seed), static_cast<double>(c.glyph_score),
                      static_cast<double>(c.style_score), static_cast<double>(c.glyph_score + c.style_score),
                      front[i] ? 1 : 0);
        csv += buf;
        std::snprintf(buf, sizeof buf, "tile %zu: %s glyph=%.4f style=%.4f%s\n", r + 1, file.c_str(),
                      static_cast<double>(c.glyph_score), static_cast<double>(c.style_score),
                      front[i] ? " front" : "");
        manifest += buf;
        ordered.push_back(c.image);
        rows.push_back({file, c, front[i]});
    }
    write_text_atomic(fs::path(cfg.output_dir) / run_files::kRankReport, csv);
    write_text_atomic(fs::path(cfg.output_dir) / run_files::kRankedManifest, manifest);
    write_png(fs::path(cfg.output_dir) / run_files::kRankedSheet, sheet(ordered));
    if (!scatter_csv.empty()) {
        std::string sc = "file,glyph_score,style_score,pareto_front\n";
        for (const auto& row : rows) {
            std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%d\n", row.file.c_str(),
                          static_cast<double>(row.candidate.glyph_score),
                          static_cast<double>(row.candidate.style_score), row.on_front ? 1 : 0);
            sc += buf;
        }
        write_text_atomic(scatter_csv, sc);
    }
    return rows;
}

std::vector<EvalRow> run_eval(const RunConfig& cfg) {
    cfg.validate();
    const char letter = single_letter(cfg);
    const fs::path dir = fs::path(cfg.output_dir) / run_files::kCandidates;
    if (!fs::is_directory(dir)) throw ConfigError("no candidates in '" + dir.string() + "'; run sample first");
    std::vector<Tensor> samples;
    for (const auto& f : list_images(dir, 1)) samples.push_back(read_png(f));
    const Scorers scorers = build_scorers(cfg);

    std::vector<Tensor> renders;
    Rng rng = Rng::stream(cfg.seed, "eval-reference");
    const AugmentPolicy policy = cfg.augment_policy();
    for (std::size_t i = 0; i < samples.size(); ++i) renders.push_back(sample_augmented_glyph(policy, cfg.text, rng));

    auto row = [&](const std::string& tag, const std::vector<Tensor>& images) {
        EvalRow r;
        r.method_tag = tag;
        const std::string labels(images.size(), letter);
        r.ocr = ocr_accuracy(images, labels, scorers.classifier, 0);
        r.ocr_blurred = ocr_accuracy(images, labels, scorers.classifier, cfg.blur_sigma);
        Real s = 0;
        for (const auto& im : images) s += style_score(scorers.style, im);
        r.style_score = s / static_cast<Real>(images.size());
        return r;
    };
    std::vector<EvalRow> rows = {row("dsfusion", samples), row("glyph_render", renders)};
    write_text_atomic(fs::path(cfg.output_dir) / run_files::kEvalReport, eval_report_csv(rows));
    return rows;
}

void run_compose(const RunConfig& cfg, const fs::path& stylized, const std::string& word, int position,
                 const fs::path& out, int padding, std::optional<Rgb> letter_color) {
    const Tensor img = read_png(stylized);
    GlyphSpec spec;
    spec.text = word;
    spec.font = cfg.font_pool().front();
    spec.foreground = {1, 1, 1};
    spec.background = cfg.augment_policy().background;
    ComposeOptions opt;
    opt.padding = padding;
    opt.letter_color = letter_color;
    write_png(out, compose_word(img, position, spec, opt));
}

Real mean_glyph_iou(const std::vector<Tensor>& images, const std::string& text, const FontRef& font,
                    Rgb background) {
    if (images.empty()) throw ArgumentError("no images to measure");
    GlyphSpec spec;
    spec.text = text;
    spec.font = font;
    spec.image_size = images.front().dim(1);
    const Tensor mask = glyph_mask(spec);
    Real s = 0;
    for (const auto& im : images) s += mask_iou(adaptive_foreground(im, background), mask);
    return s / static_cast<Real>(images.size());
}

std::vector<LambdaAblationRow> ablate_lambda(const RunConfig& cfg, const LatentCodec& codec,
                                             const std::vector<Real>& lambdas,
                                             const std::vector<std::uint64_t>& seeds, int n_samples,
                                             const Progress& progress) {
    cfg.validate();
    const auto style = load_style_images(cfg.style_path(), static_cast<std::size_t>(cfg.style_image_count));
    const AugmentPolicy policy = cfg.augment_policy();
    const FusionSetup setup = cfg.fusion_setup();
    std::vector<LambdaAblationRow> rows;
    for (Real lambda : lambdas)
        for (std::uint64_t seed : seeds) {
            FusionTrainConfig fc = cfg.fusion_config();
            fc.lambda = lambda;
            fc.seed = seed;
            const FusionModel m = train_fusion(codec, style, policy, cfg.text, fc, setup);
            const auto images = sample_images(codec, m.generator, setup.sched, {cfg.sampler, cfg.sampler_steps},
                                              n_samples, seed);
            const Real iou = mean_glyph_iou(images, cfg.text, policy.font_pool.front(), policy.background);
            rows.push_back({lambda, seed, iou});
            say(progress, "lambda " + fmt("%g", lambda) + " seed " + std::to_string(seed) + ": IoU " +
                              fmt("%.4f", iou));
        }
    return rows;
}

std::string lambda_ablation_csv(const std::vector<LambdaAblationRow>& rows) {
    std::string out = "lambda,seed,iou\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%g,%llu,%.6f\n", static_cast<double>(r.lambda),
                      static_cast<unsigned long long>(r.seed), static_cast<double>(r.iou));
        out += buf;
    }
    return out;
}

std::vector<StyleCountAblationRow> ablate_style_count(const RunConfig& cfg, const LatentCodec& codec,
                                                      const std::vector<int>& counts,
                                                      const std::vector<std::uint64_t>& seeds, int n_samples,
                                                      bool equalize_steps, const Progress& progress) {
    cfg.validate();
    if (counts.empty()) throw ArgumentError("no style counts given");
    const int max_count = *std::max_element(counts.begin(), counts.end());
    const auto style = load_style_images(cfg.style_path(), static_cast<std::size_t>(max_count));
    const AugmentPolicy policy = cfg.augment_policy();
    const FusionSetup setup = cfg.fusion_setup();
    auto batches = [&](int count) { return (count + cfg.batch_size - 1) / cfg.batch_size; };
    std::vector<StyleCountAblationRow> rows;
    for (int count : counts)
        for (std::uint64_t seed : seeds) {
            FusionTrainConfig fc = cfg.fusion_config();
            fc.style_image_count = count;
            fc.seed = seed;
            if (equalize_steps) fc.epochs = fc.epochs * batches(max_count) / batches(count);
            const FusionModel m = train_fusion(codec, style, policy, cfg.text, fc, setup);
            const auto images = sample_images(codec, m.generator, setup.sched, {cfg.sampler, cfg.sampler_steps},
                                              n_samples, seed);
            const Real div = mean_pairwise_l2(images);
            rows.push_back({count, seed, fc.epochs, div});
            say(progress, "style count " + std::to_string(count) + " seed " + std::to_string(seed) + " (" +
                              std::to_string(fc.epochs) + " epochs): diversity " + fmt("%.4f", div));
        }
    return rows;
}

std::string style_count_ablation_csv(const std::vector<StyleCountAblationRow>& rows) {
    std::string out = "style_image_count,seed,epochs,diversity\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%llu,%d,%.6f\n", r.style_image_count,
                      static_cast<unsigned long long>(r.seed), r.epochs, static_cast<double>(r.diversity));
        out += buf;
    }
    return out;
}

} // namespace dsf
