// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
//
//   dsf_acceptance [criterion numbers...]      (default: all)
//
// Scratch output (ablation CSVs, pipeline runs) goes to ./acceptance_runs.

#include "dsf/adversary.hpp"
#include "dsf/bundle.hpp"
#include "dsf/cli.hpp"
#include "dsf/diffusion.hpp"
#include "dsf/error.hpp"
#include "dsf/io.hpp"
#include "dsf/pipeline.hpp"
#include "dsf/rank.hpp"
#include "gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>

using namespace dsf;
using dsf::testing::gradcheck;
using dsf::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

const fs::path kScratch = fs::current_path() / "acceptance_runs";
const std::string kConfigs = std::string(DSF_ASSET_DIR) + "/configs/";

struct Verdict {
    bool pass;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void log(const std::string& s) {
    std::printf("    %s\n", s.c_str());
    std::fflush(stdout);
}

Tensor probe(const Tensor& y, std::uint64_t seed) { return sum(mul(y, random_tensor(y.shape(), seed))); }

// ---------------------------------------------------------------------------

Verdict gradients() {
    struct Case {
        std::string name;
        std::function<Tensor()> f;
        std::vector<Tensor> leaves;
    };
    std::vector<Case> cases;
    auto r = [](const Shape& s, std::uint64_t seed, double scale = 1) { return random_tensor(s, seed, scale); };

    {
        Tensor a = r({2, 3, 3}, 1), b = r({2, 3, 3}, 2);
        cases.push_back({"add", [=] { return probe(add(a, b), 90); }, {a, b}});
        cases.push_back({"sub", [=] { return probe(sub(a, b), 91); }, {a, b}});
        cases.push_back({"mul", [=] { return probe(mul(a, b), 92); }, {a, b}});
        cases.push_back({"scale", [=] { return probe(scale(a, -1.7), 93); }, {a}});
        cases.push_back({"add_scalar", [=] { return probe(add_scalar(a, 0.3), 94); }, {a}});
        cases.push_back({"neg", [=] { return probe(neg(a), 95); }, {a}});
        cases.push_back({"mse", [=] { return mse(a, b); }, {a, b}});
        cases.push_back({"sum", [=] { return sum(mul(a, a)); }, {a}});
        cases.push_back({"mean", [=] { return mean(mul(a, b)); }, {a, b}});
        cases.push_back({"concat_channels", [=] { return probe(concat_channels(a, b), 96); }, {a, b}});
        cases.push_back({"reshape", [=] { return probe(reshape(a, {3, 6}), 97); }, {a}});
        cases.push_back({"slice", [=] { return probe(slice(a, 3, 9), 98); }, {a}});
        cases.push_back({"clamp", [=] { return probe(clamp(a, -0.6, 0.6), 99); }, {a}});
        cases.push_back({"sum_all", [=] { return sum_all({sum(mul(a, a)), sum(b), mean(a)}); }, {a, b}});
    }
    {
        Tensor a = r({3, 4}, 3), b = r({4, 2}, 4), x = r({4}, 5), w = r({3, 4}, 6), bias = r({3}, 7);
        cases.push_back({"matmul", [=] { return probe(matmul(a, b), 100); }, {a, b}});
        cases.push_back({"linear", [=] { return probe(linear(x, w, bias), 101); }, {x, w, bias}});
    }
    {
        Tensor in = r({2, 6, 6}, 8), k = r({3, 2, 3, 3}, 9, 0.5), kb = r({3}, 10, 0.1);
        cases.push_back({"conv2d", [=] { return probe(conv2d(in, k, 1, 1), 102); }, {in, k}});
        cases.push_back({"conv2d_bias_stride2", [=] { return probe(conv2d(in, k, kb, 2, 1), 103); }, {in, k, kb}});
        cases.push_back({"upsample2d", [=] { return probe(upsample2d(in, 2), 104); }, {in}});
    }
    {
        Tensor x = r({3, 4, 4}, 11, 2);
        for (auto [name, kind] : {std::pair{"relu", Activation::relu}, {"silu", Activation::silu},
                                  {"sigmoid", Activation::sigmoid}, {"tanh", Activation::tanh}})
            cases.push_back({name, [=] { return probe(activation(x, kind), 105); }, {x}});
        cases.push_back({"log_sigmoid", [=] { return probe(log_sigmoid(x), 106); }, {x}});
        Tensor v = r({7}, 12, 3);
        cases.push_back({"log_softmax", [=] { return probe(log_softmax(v), 107); }, {v}});
    }
    {
        Tensor x = r({4, 3, 3}, 13), g = r({4}, 14), b = r({4}, 15), s = r({4}, 16, 0.5), t = r({4}, 17);
        cases.push_back({"group_norm", [=] { return probe(group_norm(x, 2, g, b), 108); }, {x, g, b}});
        cases.push_back({"film", [=] { return probe(film(x, s, t), 109); }, {x, s, t}});
    }
    {
        const NoiseSchedule sched = make_schedule();
        Tensor z0 = r({4, 4, 4}, 18), eps = r({4, 4, 4}, 19), eh = r({4, 4, 4}, 20);
        cases.push_back({"forward_noise", [=] { return probe(forward_noise(z0, 77, eps, sched), 110); }, {z0, eps}});
        cases.push_back({"predicted_z0", [=] { return probe(predicted_z0(z0, 77, eh, sched), 111); }, {z0, eh}});
        cases.push_back({"diffusion_loss", [=] { return diffusion_loss(eh, eps); }, {eh, eps}});
        Tensor la = r({1}, 21, 3), lb = r({1}, 22, 3);
        cases.push_back({"discriminator_objective",
                         [=] { return discriminator_objective_from_logits(la, lb); }, {la, lb}});
        Tensor ld = r({1}, 23), lg = r({1}, 24);
        cases.push_back({"fusion_objective", [=] { return fusion_objective(ld, lg, 0.01); }, {ld, lg}});
    }
    {
        Rng rng(25);
        DiscriminatorConfig dc;
        dc.latent_size = 8;
        dc.width = 4;
        const Discriminator d = Discriminator::init(dc, rng);
        Tensor z = r({4, 8, 8}, 26);
        NamedParams dp = d.params();
        std::vector<Tensor> leaves{z};
        for (auto& [n, t] : dp) leaves.push_back(t);
        cases.push_back({"discriminator", [=] { return d.logit(z); }, leaves});
    }

    double worst = 0;
    std::string worst_name;
    std::size_t checked = 0;
    for (const auto& c : cases) {
        const auto res = gradcheck(c.f, c.leaves);
        checked += res.checked;
        if (res.max_rel_error > worst) worst = res.max_rel_error, worst_name = c.name;
    }
    log(fmt("%zu ops, %zu entries, worst %.2e (%s)", cases.size(), checked, worst, worst_name.c_str()));

    // Full 2-level, width-8 U-Net on a 4x8x8 latent: input, conditioning and every parameter.
    Rng rng(27);
    const UNet unet = UNet::init(UNetConfig{4, 8, 2, 1, 16}, rng);
    Tensor z = random_tensor({4, 8, 8}, 28);
    Tensor cond = random_tensor({16}, 29);
    std::vector<Tensor> leaves{z, cond};
    for (auto& [n, t] : unet.params()) leaves.push_back(t);
    const auto res = gradcheck([&] { return probe(unet.predict_eps(z, 41, cond), 112); }, leaves);
    log(fmt("U-Net: %zu parameters + input + conditioning, worst %.2e", unet.parameter_count(), res.max_rel_error));
    worst = std::max(worst, res.max_rel_error);
    return {worst < 1e-3, fmt("max relative error %.2e < 1e-3", worst)};
}

Verdict diffusion_algebra() {
    const NoiseSchedule s = make_schedule();
    double worst = 0;
    for (int k = 0; k < 100; ++k) {
        const Tensor z0 = random_tensor({4, 4, 4}, 1000 + k, 3), eps = random_tensor({4, 4, 4}, 2000 + k, 2);
        const int t = (k * 53 + 11) % s.T;
        const Tensor back = predicted_z0(forward_noise(z0, t, eps, s), t, eps, s);
        for (std::size_t i = 0; i < z0.numel(); ++i) worst = std::max(worst, std::abs(back[i] - z0[i]));
    }
    log(fmt("inversion: max |error| %.2e over 100 triples", worst));

    // One statistic: E||z_t||^2 = alpha_bar ||z0||^2 + d (1 - alpha_bar) for a
    // fixed 64-dimensional z0 at a mid-chain step.
    Rng rng(3);
    const int trials = 10000, t = 99;
    const Tensor z0 = random_tensor({4, 4, 4}, 3000, 2);
    double norm0 = 0;
    for (Real v : z0.data()) norm0 += v * v;
    double m1 = 0, m2 = 0;
    std::vector<Real> e(z0.numel());
    for (int k = 0; k < trials; ++k) {
        for (auto& x : e) x = rng.normal();
        const Tensor zt = forward_noise(z0, t, Tensor::from(z0.shape(), e), s);
        double q = 0;
        for (Real v : zt.data()) q += v * v;
        m1 += q;
        m2 += q * q;
    }
    m1 /= trials;
    const double se = std::sqrt((m2 / trials - m1 * m1) / trials);
    const double expect = s.alpha_bar[t] * norm0 + static_cast<double>(z0.numel()) * (1 - s.alpha_bar[t]);
    const double dev = std::abs(m1 - expect) / se;
    log(fmt("second moment at t=%d: sample %.4f, closed form %.4f, SE %.4f", t, m1, expect, se));
    return {worst < 1e-6 && dev < 3,
            fmt("inversion error %.1e < 1e-6; second moment off by %.2f SE < 3", worst, dev)};
}

Verdict loss_oracles() {
    Rng rng(4);
    DiscriminatorConfig dc;
    dc.zero_final = true;
    const Discriminator d = Discriminator::init(dc, rng);
    const Real l_dis = discriminator_objective(d, random_tensor({4, 16, 16}, 5), random_tensor({4, 16, 16}, 6)).item();
    const bool dis_ok = std::abs(l_dis - (-1.3863)) <= 1e-4;
    log(fmt("L_dis at D = 0.5: %.6f", l_dis));

    const Real fused = fusion_objective(0.5, -1.0, 0.01);
    const bool fused_ok = fused == 0.49;
    log(fmt("fusion objective (0.5, -1.0, 0.01) = %.17g", fused));

    Rng crng(7);
    LatentCodec codec = LatentCodec::init({}, crng);
    codec.freeze();
    auto generator = [](std::uint64_t seed) {
        Rng g(seed);
        return Generator{UNet::init(UNetConfig{4, 8, 2, 1, 16}, g), ConditioningVector::from_prompt("A", 16, seed)};
    };
    Generator a = generator(8), b = generator(8);
    Rng drng(9);
    const Discriminator disc = Discriminator::init({}, drng);
    Adam oa(tensors_of(a.params())), ob(tensors_of(b.params()));
    const NoiseSchedule sched = make_schedule();
    std::vector<Tensor> style;
    for (int i = 0; i < 3; ++i) style.push_back(random_tensor({4, 16, 16}, 10 + i));
    Rng ra(13), rb(13);
    bool same = true;
    for (int step = 0; step < 20; ++step) {
        const std::vector<Tensor> batch{style[step % 3]};
        const auto la = train_step_g(disc, a, codec, batch, sched, oa, 1e-3, 0, ra);
        const Real lb = train_step_diffusion(b, batch, sched, ob, 1e-3, rb);
        same = same && la.l_diff == lb;
    }
    const auto pa = a.params(), pb = b.params();
    for (std::size_t k = 0; k < pa.size(); ++k)
        same = same && std::equal(pa[k].second.data().begin(), pa[k].second.data().end(),
                                  pb[k].second.data().begin(), pb[k].second.data().end());
    log(std::string("lambda = 0 vs diffusion-only over 20 steps: ") + (same ? "bitwise equal" : "DIFFERENT"));
    return {dis_ok && fused_ok && same, fmt("L_dis %.4f, fusion %.2f, lambda=0 %s", l_dis, fused,
                                            same ? "bitwise equal" : "differs")};
}

// Shared by criteria 4 and 5: the demo configuration and its codec.
struct Demo {
    RunConfig cfg;
    LatentCodec codec;
};

const Demo& demo() {
    static const Demo d = [] {
        Demo out;
        out.cfg = load_config(kConfigs + "demo.cfg");
        out.cfg.output_dir = (kScratch / "demo").string();
        const auto t0 = std::chrono::steady_clock::now();
        out.codec = run_train_codec(out.cfg, log);
        log(fmt("demo codec trained in %.0f s", seconds_since(t0)));
        return out;
    }();
    return d;
}

std::map<Real, double> mean_by_lambda(const std::vector<LambdaAblationRow>& rows) {
    std::map<Real, double> sum, n;
    for (const auto& r : rows) sum[r.lambda] += r.iou, n[r.lambda] += 1;
    for (auto& [k, v] : sum) v /= n[k];
    return sum;
}

Verdict lambda_direction() {
    const Demo& d = demo();
    RunConfig cfg = d.cfg;
    cfg.style_image_count = 8;
    const auto rows = ablate_lambda(cfg, d.codec, {0, 0.01, 1}, {1, 2, 3}, 8, log);
    write_text_atomic(kScratch / "ablate_lambda.csv", lambda_ablation_csv(rows));
    const auto m = mean_by_lambda(rows);
    const double i0 = m.at(0), i1 = m.at(0.01), i2 = m.at(1);
    return {i2 > i0 && i1 > i0, fmt("mean IoU lambda=0 %.4f, lambda=0.01 %.4f, lambda=1 %.4f", i0, i1, i2)};
}

Verdict style_count_direction() {
    const Demo& d = demo();
    RunConfig cfg = d.cfg;
    cfg.lambda = 0;
    cfg.sampler = "ddpm";
    cfg.sampler_steps = cfg.timesteps;
    const auto rows = ablate_style_count(cfg, d.codec, {25, 2}, {1, 2, 3}, 8, true, log);
    write_text_atomic(kScratch / "ablate_style_count.csv", style_count_ablation_csv(rows));
    double many = 0, few = 0;
    std::map<std::uint64_t, double> by_seed;
    for (const auto& r : rows) {
        (r.style_image_count == 25 ? many : few) += r.diversity / 3;
        by_seed[r.seed] += r.style_image_count == 25 ? r.diversity : -r.diversity;
    }
    const auto wins = std::count_if(by_seed.begin(), by_seed.end(), [](const auto& kv) { return kv.second > 0; });
    return {many > few, fmt("mean pairwise L2 at 25 images %.3f vs 2 images %.3f (25 higher on %d of 3 seeds)", many,
                            few, static_cast<int>(wins))};
}

Candidate scored(Real g, Real s) {
    Candidate c;
    c.glyph_score = g;
    c.style_score = s;
    return c;
}

Verdict ranking() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(6);
    int mismatches = 0, bad_first = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(60));
        const int levels = trial % 3 == 0 ? 5 : 1000; // coarse levels force ties
        std::vector<Candidate> cs;
        for (int i = 0; i < n; ++i)
            cs.push_back(scored(Real(rng.below(levels)) / levels, Real(rng.below(levels)) / levels));
        std::set<std::size_t> brute;
        for (int i = 0; i < n; ++i) {
            bool dominated = false;
            for (int j = 0; j < n; ++j)
                dominated = dominated || (cs[j].glyph_score >= cs[i].glyph_score &&
                                          cs[j].style_score >= cs[i].style_score &&
                                          (cs[j].glyph_score > cs[i].glyph_score || cs[j].style_score > cs[i].style_score));
            if (!dominated) brute.insert(i);
        }
        const Ranking r = rank_candidates(cs);
        if (std::set<std::size_t>(r.pareto_front.begin(), r.pareto_front.end()) != brute) ++mismatches;
        if (!brute.count(r.order.front())) ++bad_first;
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && bad_first == 0 && secs < 10,
            fmt("1000 sets: %d front mismatches, %d dominated-first, %.2f s", mismatches, bad_first, secs)};
}

Verdict classifier() {
    Rng rng(42);
    const auto fonts = load_bundled_fonts();
    const GlyphClassifier clf = train_glyph_classifier(fonts, {}, rng);
    const Real acc = clean_render_accuracy(clf, fonts);

    // Crafted batches: a known number of matching labels.
    bool counts_ok = ocr_accuracy(std::vector<int>{3, 1, 4, 1, 5}, std::vector<int>{3, 1, 4, 1, 5}) == 100 &&
                     ocr_accuracy(std::vector<int>{3, 1, 4, 1, 5}, std::vector<int>{3, 0, 4, 0, 0}) == 40 &&
                     ocr_accuracy(std::vector<int>{7, 7, 7, 7}, std::vector<int>{1, 2, 3, 4}) == 0;
    std::vector<Tensor> images;
    for (char c : std::string("HELLO")) {
        GlyphSpec s;
        s.text = std::string(1, c);
        s.font = fonts.front();
        images.push_back(rasterize(s));
    }
    int hand = 0;
    const std::string labels = "HELP0";
    for (std::size_t i = 0; i < images.size(); ++i) hand += clf.predict_class(images[i]) == glyph_class_index(labels[i]);
    counts_ok = counts_ok && ocr_accuracy(images, labels, clf) == 100.0 * hand / 5;
    return {acc >= 0.95 && counts_ok,
            fmt("clean-render accuracy %.2f%% (>= 95%%); ocr hand counts %s", 100 * acc, counts_ok ? "match" : "DIFFER")};
}

std::map<std::string, std::vector<std::uint8_t>> report_files(const fs::path& dir) {
    std::map<std::string, std::vector<std::uint8_t>> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".csv" || ext == ".png"))
            out[fs::relative(e.path(), dir).string()] = read_file(e.path());
    }
    return out;
}

Verdict reproducibility() {
    setenv("DSF_DETERMINISTIC", "1", 1);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::map<std::string, std::vector<std::uint8_t>>> runs;
    for (const char* name : {"smoke_a", "smoke_b"}) {
        const fs::path dir = kScratch / name;
        fs::remove_all(dir);
        const std::vector<std::string> common = {"-c", kConfigs + "smoke.cfg", "-o", dir.string(), "--seed", "7"};
        for (std::vector<std::string> stage : {std::vector<std::string>{"train-codec"}, {"train"}, {"sample", "-n", "4"},
                                               {"rank"}, {"eval"}}) {
            stage.insert(stage.end(), common.begin(), common.end());
            std::ostringstream out, err;
            if (cmd_run(stage, out, err) != 0) return {false, stage.front() + " failed: " + err.str()};
        }
        runs.push_back(report_files(dir));
        log(fmt("%s: %zu reports after %.0f s", name, runs.back().size(), seconds_since(t0)));
    }
    const double per_run = seconds_since(t0) / 2;
    int differing = 0;
    for (const auto& [file, bytes] : runs[0]) {
        const auto it = runs[1].find(file);
        if (it == runs[1].end() || it->second != bytes) {
            ++differing;
            log("differs: " + file);
        }
    }
    const bool complete = runs[0].size() == runs[1].size() && runs[0].count("rank.csv") && runs[0].count("eval.csv") &&
                          runs[0].count("loss.csv") && runs[0].count("contact_sheet.png");
    return {differing == 0 && complete && per_run <= 1800,
            fmt("%zu CSV/PNG files, %d differ; %.0f s per run", runs[0].size(), differing, per_run)};
}

Verdict serialization() {
    // A real trained model from the reproducibility run when present, else a fresh one.
    const fs::path model = kScratch / "smoke_a" / run_files::kModel;
    ModelBundle b;
    if (fs::exists(model)) {
        b = load_bundle(model);
    } else {
        Rng rng(1);
        b.codec = LatentCodec::init({}, rng);
        b.codec->freeze();
        b.generator = Generator{UNet::init(UNetConfig{4, 8, 2, 1, 16}, rng), ConditioningVector::from_prompt("A", 16, 1)};
        b.discriminator = Discriminator::init({}, rng);
        b.schedule = make_schedule();
        b.config_text = "text = A\n";
    }
    const auto bytes = serialize_bundle(b);
    const bool round_trip = serialize_bundle(deserialize_bundle(bytes)) == bytes &&
                            (!fs::exists(model) || read_file(model) == bytes);

    // Exhaustive on a small bundle with every section: all 255 corruptions of every byte.
    Rng rng(2);
    ModelBundle small;
    CodecConfig cc;
    cc.hidden1 = 2;
    cc.hidden2 = 2;
    small.codec = LatentCodec::init(cc, rng);
    small.codec->freeze();
    small.generator = Generator{UNet::init(UNetConfig{4, 2, 1, 1, 3}, rng), ConditioningVector::from_prompt("A", 3, 2)};
    DiscriminatorConfig dc;
    dc.width = 1;
    small.discriminator = Discriminator::init(dc, rng);
    small.schedule = make_schedule(8);
    small.config_text = "lambda = 0.01\n";
    small.loss_log = {{1, 0.5, -1.3, 0.487}};
    const auto clean = serialize_bundle(small);
    auto detected = [](const std::vector<std::uint8_t>& v) {
        try {
            deserialize_bundle(v);
            return false;
        } catch (const FormatError&) {
        } catch (const CorruptionError&) {
        }
        return true;
    };
    std::size_t missed = 0, tried = 0;
    auto work = clean;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        for (int x = 1; x < 256; ++x) {
            work[i] = static_cast<std::uint8_t>(clean[i] ^ x);
            missed += !detected(work);
            ++tried;
        }
        work[i] = clean[i];
    }
    log(fmt("small bundle: %zu bytes, %zu corruptions tried, %zu missed", clean.size(), tried, missed));

    // Sampled corruptions of the full-size bundle.
    std::size_t missed_big = 0;
    Rng pick(3);
    auto big = bytes;
    for (int k = 0; k < 300; ++k) {
        const std::size_t i = pick.below(big.size());
        const auto x = static_cast<std::uint8_t>(1 + pick.below(255));
        big[i] ^= x;
        missed_big += !detected(big);
        big[i] ^= x;
    }
    log(fmt("full bundle: %zu bytes, 300 sampled corruptions, %zu missed", bytes.size(), missed_big));
    return {round_trip && missed == 0 && missed_big == 0,
            fmt("round trip %s; %zu + 300 single-byte corruptions, %zu undetected", round_trip ? "bitwise" : "DIFFERS",
                tried, missed + missed_big)};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"gradient correctness", gradients},
        {"diffusion algebra", diffusion_algebra},
        {"loss oracles", loss_oracles},
        {"lambda-direction ablation", lambda_direction},
        {"style-count ablation", style_count_direction},
        {"ranking correctness", ranking},
        {"glyph classifier", classifier},
        {"end-to-end reproducibility", reproducibility},
        {"serialization robustness", serialization},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    fs::create_directories(kScratch);

    int failures = 0;
    std::vector<std::string> summary;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!wanted.empty() && !wanted.count(id)) continue;
        std::printf("criterion %d (%s): running\n", id, criteria[i].first.c_str());
        std::fflush(stdout);
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const std::string line = fmt("criterion %d %-28s %s  %s [%.1f s]", id, (criteria[i].first + ":").c_str(),
                                     v.pass ? "PASS" : "FAIL", v.detail.c_str(), seconds_since(t0));
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        summary.push_back(line);
        failures += !v.pass;
    }
    std::printf("\n");
    for (const auto& s : summary) std::printf("%s\n", s.c_str());
    std::printf("%d of %zu criteria failed\n", failures, summary.size());
    return failures == 0 ? 0 : 1;
}
