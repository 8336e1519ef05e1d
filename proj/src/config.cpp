#include "dsf/config.hpp"

#include "dsf/error.hpp"
#include "dsf/io.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <sstream>

namespace dsf {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <class T>
std::string format_number(T v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join_list(const std::vector<std::string>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + xs[i];
    return out;
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field number_field(const std::string& key, T RunConfig::*member) {
    return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); },
            [member](const RunConfig& c) { return format_number(c.*member); }};
}

Field bool_field(const std::string& key, bool RunConfig::*member) {
    return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = parse_bool(key, v); },
            [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field string_field(const std::string& key, std::string RunConfig::*member) {
    return {key, [member](RunConfig& c, const std::string& v) { c.*member = v; },
            [member](const RunConfig& c) { return c.*member; }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        number_field("lambda", &RunConfig::lambda),
        number_field("lr_generator", &RunConfig::lr_generator),
        number_field("lr_discriminator", &RunConfig::lr_discriminator),
        number_field("epochs", &RunConfig::epochs),
        number_field("batch_size", &RunConfig::batch_size),
        {"mode",
         [](RunConfig& c, const std::string& v) {
             if (v == "single_font") c.mode = AugmentMode::single_font;
             else if (v == "multi_font") c.mode = AugmentMode::multi_font;
             else throw ConfigError("mode: expected single_font or multi_font, got '" + v + "'");
         },
         [](const RunConfig& c) {
             return std::string(c.mode == AugmentMode::single_font ? "single_font" : "multi_font");
         }},
        number_field("d_steps_per_g_step", &RunConfig::d_steps_per_g_step),
        number_field("style_image_count", &RunConfig::style_image_count),
        number_field("seed", &RunConfig::seed),
        string_field("style_dir", &RunConfig::style_dir),
        {"fonts", [](RunConfig& c, const std::string& v) { c.fonts = split_list(v); },
         [](const RunConfig& c) { return join_list(c.fonts); }},
        string_field("text", &RunConfig::text),
        string_field("prompt", &RunConfig::prompt),
        string_field("output_dir", &RunConfig::output_dir),
        bool_field("randomize_color", &RunConfig::randomize_color),
        string_field("sampler", &RunConfig::sampler),
        number_field("sampler_steps", &RunConfig::sampler_steps),
        number_field("n_candidates", &RunConfig::n_candidates),
        number_field("blur_sigma", &RunConfig::blur_sigma),
        bool_field("deterministic", &RunConfig::deterministic),
        number_field("unet_width", &RunConfig::unet_width),
        number_field("unet_levels", &RunConfig::unet_levels),
        number_field("unet_blocks", &RunConfig::unet_blocks),
        number_field("d_cond", &RunConfig::d_cond),
        number_field("disc_width", &RunConfig::disc_width),
        number_field("timesteps", &RunConfig::timesteps),
        number_field("beta_start", &RunConfig::beta_start),
        number_field("beta_end", &RunConfig::beta_end),
        number_field("codec_epochs", &RunConfig::codec_epochs),
        number_field("codec_batch_size", &RunConfig::codec_batch_size),
        number_field("codec_lr", &RunConfig::codec_lr),
        number_field("codec_glyph_count", &RunConfig::codec_glyph_count),
        number_field("classifier_steps", &RunConfig::classifier_steps),
    };
    return f;
}

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key + ": " + what);
}

} // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : fields())
        if (f.key == key) {
            f.set(cfg, value);
            return;
        }
    throw ConfigError(key + ": unknown key");
}

void RunConfig::validate() const {
    require(lambda >= 0, "lambda", "must be >= 0");
    require(lr_generator > 0, "lr_generator", "must be > 0");
    require(lr_discriminator > 0, "lr_discriminator", "must be > 0");
    require(epochs >= 0, "epochs", "must be >= 0 (0 selects the mode default)");
    require(batch_size >= 1, "batch_size", "must be >= 1");
    require(d_steps_per_g_step >= 0, "d_steps_per_g_step", "must be >= 0");
    require(style_image_count >= 1, "style_image_count", "must be >= 1");
    require(!text.empty(), "text", "must not be empty");
    for (char c : text)
        for (const auto& f : font_pool())
            require(f->has(c), "text", "font '" + f->name + "' has no glyph for '" + std::string(1, c) + "'");
    require(!output_dir.empty(), "output_dir", "must not be empty");
    require(sampler == "ddim" || sampler == "ddpm", "sampler", "must be ddim or ddpm");
    require(sampler_steps >= 1 && sampler_steps <= timesteps, "sampler_steps", "must lie in [1, timesteps]");
    require(n_candidates >= 1, "n_candidates", "must be >= 1");
    require(blur_sigma >= 0, "blur_sigma", "must be >= 0");
    require(unet_width >= 2 && unet_width % 2 == 0, "unet_width", "must be an even number >= 2");
    require(unet_levels >= 1 && unet_levels <= 3, "unet_levels", "must lie in [1, 3]");
    require(unet_blocks >= 1, "unet_blocks", "must be >= 1");
    require(d_cond >= 1, "d_cond", "must be >= 1");
    require(disc_width >= 1, "disc_width", "must be >= 1");
    require(timesteps >= 1, "timesteps", "must be >= 1");
    require(beta_start > 0 && beta_start <= beta_end, "beta_start", "must satisfy 0 < beta_start <= beta_end");
    require(beta_end < 1, "beta_end", "must be < 1");
    require(codec_epochs >= 1, "codec_epochs", "must be >= 1");
    require(codec_batch_size >= 1, "codec_batch_size", "must be >= 1");
    require(codec_lr > 0, "codec_lr", "must be > 0");
    require(codec_glyph_count >= 0, "codec_glyph_count", "must be >= 0");
    require(classifier_steps >= 1, "classifier_steps", "must be >= 1");
    for (const auto& [key, v] : {std::pair<const char*, const std::string*>{"text", &text},
                                 {"prompt", &prompt}, {"output_dir", &output_dir}, {"style_dir", &style_dir}})
        require(v->find_first_of("#\n") == std::string::npos, key, "must not contain '#' or newlines");
    if (!style_dir.empty())
        require(std::filesystem::is_directory(style_dir), "style_dir", "'" + style_dir + "' is not a directory");
}

FusionTrainConfig RunConfig::fusion_config() const {
    FusionTrainConfig f;
    f.lambda = lambda;
    f.lr_generator = lr_generator;
    f.lr_discriminator = lr_discriminator;
    f.epochs = epochs > 0 ? epochs : default_epochs(mode);
    f.batch_size = batch_size;
    f.mode = mode;
    f.d_steps_per_g_step = d_steps_per_g_step;
    f.style_image_count = style_image_count;
    f.seed = seed;
    return f;
}

FusionSetup RunConfig::fusion_setup() const {
    FusionSetup s;
    s.unet.base_width = unet_width;
    s.unet.levels = unet_levels;
    s.unet.blocks_per_level = unet_blocks;
    s.unet.d_cond = d_cond;
    s.disc.width = disc_width;
    s.sched = schedule();
    s.prompt = effective_prompt();
    return s;
}

CodecTrainConfig RunConfig::codec_train_config() const {
    CodecTrainConfig c;
    c.epochs = codec_epochs;
    c.batch_size = codec_batch_size;
    c.lr = codec_lr;
    return c;
}

NoiseSchedule RunConfig::schedule() const { return make_schedule(timesteps, beta_start, beta_end); }

std::filesystem::path RunConfig::style_path() const {
    return style_dir.empty() ? asset_dir() / "demo_style" : std::filesystem::path(style_dir);
}

std::vector<FontRef> RunConfig::font_pool() const {
    std::vector<FontRef> out;
    try {
        if (fonts.empty()) {
            if (mode == AugmentMode::single_font) out.push_back(load_bundled_font("mono-a"));
            else out = load_bundled_fonts();
        } else {
            for (const auto& f : fonts) out.push_back(resolve_font(f));
        }
    } catch (const Error& e) {
        throw ConfigError(std::string("fonts: ") + e.what());
    }
    return out;
}

AugmentPolicy RunConfig::augment_policy() const {
    AugmentPolicy p;
    p.mode = mode;
    p.font_pool = font_pool();
    if (mode == AugmentMode::single_font) p.font_pool.resize(1);
    p.randomize_color = randomize_color;
    return p;
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        set_config_value(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text(path);
    } catch (const Error& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    return parse_config(text);
}

std::string format_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
    return out;
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
    write_text_atomic(path, format_config(cfg));
}

bool deterministic_from_env(bool fallback) {
    const char* v = std::getenv("DSF_DETERMINISTIC");
    if (v == nullptr) return fallback;
    return std::string(v) == "1" || fallback;
}

} // namespace dsf
