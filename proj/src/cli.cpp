#include "dsf/cli.hpp"

#include "dsf/error.hpp"
#include "dsf/image.hpp"
#include "dsf/io.hpp"
#include "dsf/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>

namespace dsf {

namespace {

struct ConfigOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string output_dir;
    std::optional<std::uint64_t> seed;
};

void add_config_options(CLI::App* sub, ConfigOptions& o) {
    sub->add_option("-c,--config", o.config_path, "Run configuration file");
    sub->add_option("--set", o.overrides, "Override a config key, as key=value (repeatable)");
    sub->add_option("-o,--output-dir", o.output_dir, "Run directory (overrides output_dir)");
    sub->add_option("--seed", o.seed, "Seed (overrides seed)");
}

RunConfig resolve_config(const ConfigOptions& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
    if (o.seed) cfg.seed = *o.seed;
    cfg.deterministic = deterministic_from_env(cfg.deterministic);
    cfg.validate();
    return cfg;
}

Rgb parse_rgb(const std::string& s, const std::string& flag) {
    Rgb c;
    Real* dst[3] = {&c.r, &c.g, &c.b};
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        const auto next = i < 2 ? s.find(',', pos) : s.size();
        if (next == std::string::npos) throw ArgumentError(flag + ": expected r,g,b");
        const std::string part = s.substr(pos, next - pos);
        double v = 0;
        const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc() || p != part.data() + part.size() || v < 0 || v > 1)
            throw ArgumentError(flag + ": components must be numbers in [0, 1]");
        *dst[i] = static_cast<Real>(v);
        pos = next + 1;
    }
    return c;
}

template <class T>
std::vector<T> parse_list(const std::string& s, const std::string& flag) {
    std::vector<T> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        auto next = s.find(',', pos);
        if (next == std::string::npos) next = s.size();
        const std::string part = s.substr(pos, next - pos);
        T v{};
        const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (part.empty() || ec != std::errc() || p != part.data() + part.size())
            throw ArgumentError(flag + ": cannot parse '" + part + "'");
        out.push_back(v);
        pos = next + 1;
    }
    return out;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

} // namespace

int cmd_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Discriminated diffusion for artistic letters", "dsfusion"};
    app.require_subcommand(1);
    const Progress progress = [&](const std::string& msg) { err << msg << '\n' << std::flush; };

    // render-glyph
    GlyphSpec spec;
    std::string font_name = "mono-a", fg = "0,0,0", bg = "1,1,1", glyph_out, mask_out;
    Real mask_tau = Real(0.5);
    auto* render = app.add_subcommand("render-glyph", "Rasterize text in a stroke font");
    render->add_option("--text", spec.text, "Text to render")->required();
    render->add_option("--font", font_name, "Bundled font name or .sf file");
    render->add_option("--size", spec.image_size, "Square image size in pixels");
    render->add_option("--fg", fg, "Foreground colour r,g,b in [0,1]");
    render->add_option("--bg", bg, "Background colour r,g,b in [0,1]");
    render->add_option("--thickness", spec.thickness_scale, "Stroke thickness multiplier");
    render->add_option("--slant", spec.slant, "Horizontal shear");
    render->add_option("--out", glyph_out, "Output PNG")->required();
    render->add_option("--mask", mask_out, "Also write the foreground mask as PGM");

    ConfigOptions codec_opt, train_opt, sample_opt, rank_opt, eval_opt, compose_opt, lam_opt, count_opt;
    auto* train_codec_cmd = app.add_subcommand("train-codec", "Train the latent codec");
    add_config_options(train_codec_cmd, codec_opt);
    auto* train_cmd = app.add_subcommand("train", "Train the generator and discriminator");
    add_config_options(train_cmd, train_opt);

    std::optional<int> n_candidates;
    auto* sample_cmd = app.add_subcommand("sample", "Sample candidates and a contact sheet");
    add_config_options(sample_cmd, sample_opt);
    sample_cmd->add_option("-n,--n", n_candidates, "Number of candidates (overrides n_candidates)");

    std::string scatter_csv;
    auto* rank_cmd = app.add_subcommand("rank", "Score and rank the sampled candidates");
    add_config_options(rank_cmd, rank_opt);
    rank_cmd->add_option("--scatter-csv", scatter_csv, "Write the raw score pairs to this CSV");

    auto* eval_cmd = app.add_subcommand("eval", "Write OCR and style metrics");
    add_config_options(eval_cmd, eval_opt);

    std::string stylized, word, compose_out, letter_color;
    int position = 0, padding = 0;
    auto* compose_cmd = app.add_subcommand("compose", "Place a stylized letter inside a word");
    add_config_options(compose_cmd, compose_opt);
    compose_cmd->add_option("--stylized", stylized, "Stylized letter PNG")->required();
    compose_cmd->add_option("--word", word, "Word to compose")->required();
    compose_cmd->add_option("--position", position, "Index of the stylized letter in the word");
    compose_cmd->add_option("--padding", padding, "Pixels of padding around each cell");
    compose_cmd->add_option("--out", compose_out, "Output PNG")->required();
    compose_cmd->add_option("--letter-color", letter_color,
                            "Colour r,g,b of the plain letters (default: dominant colour of the stylized image)");

    std::string lambdas = "0,0.01,1", seeds = "0,1,2", counts = "2,25", ablation_out;
    int n_samples = 8;
    bool equalize = false;
    auto* lam_cmd = app.add_subcommand("ablate-lambda", "Glyph IoU as a function of lambda");
    add_config_options(lam_cmd, lam_opt);
    lam_cmd->add_option("--lambdas", lambdas, "Comma-separated lambda values");
    lam_cmd->add_option("--seeds", seeds, "Comma-separated training seeds");
    lam_cmd->add_option("--samples", n_samples, "Samples per model");
    lam_cmd->add_option("--out", ablation_out, "CSV output (default: <output_dir>/ablate_lambda.csv)");
    auto* count_cmd = app.add_subcommand("ablate-style-count", "Sample diversity as a function of corpus size");
    add_config_options(count_cmd, count_opt);
    count_cmd->add_option("--counts", counts, "Comma-separated style image counts");
    count_cmd->add_option("--seeds", seeds, "Comma-separated training seeds");
    count_cmd->add_option("--samples", n_samples, "Samples per model");
    count_cmd->add_flag("--equalize-steps", equalize, "Give every count the same number of optimizer steps");
    count_cmd->add_option("--out", ablation_out, "CSV output (default: <output_dir>/ablate_style_count.csv)");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << one_line(e.what()) << '\n';
        const CLI::App* failing = &app;
        for (const auto* s : app.get_subcommands()) failing = s;
        err << failing->help();
        return 2;
    }

    try {
        if (render->parsed()) {
            spec.font = resolve_font(font_name);
            spec.foreground = parse_rgb(fg, "--fg");
            spec.background = parse_rgb(bg, "--bg");
            const Tensor img = rasterize(spec);
            write_png(glyph_out, img);
            if (!mask_out.empty()) write_pgm(mask_out, segment_foreground(img, spec.background, mask_tau));
            out << glyph_out << '\n';
        } else if (train_codec_cmd->parsed()) {
            const RunConfig cfg = resolve_config(codec_opt);
            run_train_codec(cfg, progress);
            out << (std::filesystem::path(cfg.output_dir) / run_files::kCodec).string() << '\n';
        } else if (train_cmd->parsed()) {
            const RunConfig cfg = resolve_config(train_opt);
            run_train(cfg, progress);
            out << (std::filesystem::path(cfg.output_dir) / run_files::kModel).string() << '\n';
        } else if (sample_cmd->parsed()) {
            RunConfig cfg = resolve_config(sample_opt);
            if (n_candidates) cfg.n_candidates = *n_candidates;
            cfg.validate();
            const auto cands = run_sample(cfg, cfg.n_candidates, cfg.seed);
            out << cands.size() << " candidates in "
                << (std::filesystem::path(cfg.output_dir) / run_files::kCandidates).string() << '\n';
        } else if (rank_cmd->parsed()) {
            const RunConfig cfg = resolve_config(rank_opt);
            const auto rows = run_rank(cfg, scatter_csv);
            out << read_text(std::filesystem::path(cfg.output_dir) / run_files::kRankReport);
            (void)rows;
        } else if (eval_cmd->parsed()) {
            const RunConfig cfg = resolve_config(eval_opt);
            out << eval_report_csv(run_eval(cfg));
        } else if (compose_cmd->parsed()) {
            const RunConfig cfg = resolve_config(compose_opt);
            std::optional<Rgb> color;
            if (!letter_color.empty()) color = parse_rgb(letter_color, "--letter-color");
            run_compose(cfg, stylized, word, position, compose_out, padding, color);
            out << compose_out << '\n';
        } else if (lam_cmd->parsed()) {
            const RunConfig cfg = resolve_config(lam_opt);
            const LatentCodec codec = load_codec(std::filesystem::path(cfg.output_dir) / run_files::kCodec);
            const auto rows = ablate_lambda(cfg, codec, parse_list<Real>(lambdas, "--lambdas"),
                                            parse_list<std::uint64_t>(seeds, "--seeds"), n_samples, progress);
            const std::string csv = lambda_ablation_csv(rows);
            write_text_atomic(ablation_out.empty() ? std::filesystem::path(cfg.output_dir) / "ablate_lambda.csv"
                                                   : std::filesystem::path(ablation_out),
                              csv);
            out << csv;
        } else if (count_cmd->parsed()) {
            const RunConfig cfg = resolve_config(count_opt);
            const LatentCodec codec = load_codec(std::filesystem::path(cfg.output_dir) / run_files::kCodec);
            const auto rows =
                ablate_style_count(cfg, codec, parse_list<int>(counts, "--counts"),
                                   parse_list<std::uint64_t>(seeds, "--seeds"), n_samples, equalize, progress);
            const std::string csv = style_count_ablation_csv(rows);
            write_text_atomic(ablation_out.empty()
                                  ? std::filesystem::path(cfg.output_dir) / "ablate_style_count.csv"
                                  : std::filesystem::path(ablation_out),
                              csv);
            out << csv;
        }
    } catch (const Error& e) {
        err << "error: " << e.kind() << ": " << one_line(e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: internal: " << one_line(e.what()) << '\n';
        return 1;
    }
    return 0;
}

int cmd_run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return cmd_run(args, out, err);
}

} // namespace dsf
