#include "dsf/diffusion.hpp"

#include "dsf/error.hpp"

#include <cmath>

namespace dsf {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ArgumentError("schedule needs T >= 1, got " + std::to_string(T));
    if (!(beta_start > 0) || !(beta_start <= beta_end) || !(beta_end < 1))
        throw ArgumentError("schedule needs 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1;
    for (int t = 0; t < T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t) / (T - 1);
        s.beta[t] = beta_start + (beta_end - beta_start) * frac;
        s.alpha[t] = 1 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

void validate_schedule(const NoiseSchedule& s) {
    const auto n = static_cast<std::size_t>(s.T);
    if (s.T < 1 || s.beta.size() != n || s.alpha.size() != n || s.alpha_bar.size() != n)
        throw ArgumentError("schedule arrays do not match T");
    for (int t = 0; t < s.T; ++t) {
        if (!(s.beta[t] > 0 && s.beta[t] < 1)) throw ArgumentError("schedule beta out of (0,1)");
        if (t > 0 && s.beta[t] < s.beta[t - 1]) throw ArgumentError("schedule beta decreases");
        if (t > 0 && !(s.alpha_bar[t] < s.alpha_bar[t - 1]))
            throw ArgumentError("schedule alpha_bar not strictly decreasing");
    }
}

namespace {

void check_t(int t, const NoiseSchedule& sched, const char* op) {
    if (t < 0 || t >= sched.T)
        throw ArgumentError(std::string(op) + ": timestep " + std::to_string(t) +
                            " outside [0, " + std::to_string(sched.T) + ")");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

} // namespace

Tensor forward_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    check_t(t, sched, "forward_noise");
    check_same_shape(z0, eps, "forward_noise");
    const double ab = sched.alpha_bar[t];
    return add(scale(z0, static_cast<Real>(std::sqrt(ab))),
               scale(eps, static_cast<Real>(std::sqrt(1 - ab))));
}

Tensor predicted_z0(const Tensor& z_t, int t, const Tensor& eps_hat, const NoiseSchedule& sched) {
    check_t(t, sched, "predicted_z0");
    check_same_shape(z_t, eps_hat, "predicted_z0");
    const double ab = sched.alpha_bar[t];
    return scale(sub(z_t, scale(eps_hat, static_cast<Real>(std::sqrt(1 - ab)))),
                 static_cast<Real>(1 / std::sqrt(ab)));
}

Tensor diffusion_loss(const Tensor& eps_hat, const Tensor& eps) {
    check_same_shape(eps_hat, eps, "diffusion_loss");
    return mse(eps_hat, eps);
}

std::vector<Real> timestep_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ArgumentError("timestep embedding dim must be even");
    const int half = dim / 2;
    std::vector<Real> out(dim);
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        out[i] = static_cast<Real>(std::sin(t * freq));
        out[half + i] = static_cast<Real>(std::cos(t * freq));
    }
    return out;
}

ConditioningVector ConditioningVector::from_prompt(const std::string& prompt, int d_cond,
                                                   std::uint64_t seed, bool trainable) {
    if (d_cond < 1) throw ArgumentError("d_cond must be positive");
    Rng rng(Rng::mix(hash_string(prompt) ^ Rng::mix(seed)));
    ConditioningVector c;
    c.embedding = randn({d_cond}, rng);
    c.embedding.set_requires_grad(trainable);
    c.trainable = trainable;
    return c;
}

UNet::ResBlock UNet::make_block(int in, int out, int emb_dim, Rng& rng) {
    ResBlock b;
    b.norm1 = GroupNorm::make(in);
    b.conv1 = Conv2d::make(in, out, 3, 1, 1, rng);
    b.film = Linear::make(emb_dim, 2 * out, rng, Real(0.2));
    b.norm2 = GroupNorm::make(out);
    b.conv2 = Conv2d::make(out, out, 3, 1, 1, rng, Real(0.5));
    b.has_skip = in != out;
    if (b.has_skip) b.skip = Conv2d::make(in, out, 1, 1, 0, rng);
    return b;
}

Tensor UNet::ResBlock::operator()(const Tensor& x, const Tensor& emb) const {
    const auto c = static_cast<std::size_t>(conv1.weight.dim(0));
    Tensor h = conv1(silu(norm1(x)));
    const Tensor mod = film(emb);
    h = dsf::film(h, slice(mod, 0, c), slice(mod, c, c));
    h = conv2(silu(norm2(h)));
    return add(has_skip ? skip(x) : x, h);
}

void UNet::ResBlock::collect(NamedParams& out, const std::string& prefix) const {
    norm1.collect(out, prefix + ".norm1");
    conv1.collect(out, prefix + ".conv1");
    film.collect(out, prefix + ".film");
    norm2.collect(out, prefix + ".norm2");
    conv2.collect(out, prefix + ".conv2");
    if (has_skip) skip.collect(out, prefix + ".skip");
}

UNet UNet::init(const UNetConfig& cfg, Rng& rng) {
    if (cfg.in_channels < 1 || cfg.base_width < 2 || cfg.base_width % 2 != 0 || cfg.levels < 1 ||
        cfg.blocks_per_level < 1 || cfg.d_cond < 1)
        throw ConfigError("invalid U-Net configuration");
    UNet u;
    u.cfg_ = cfg;
    const int w = cfg.base_width;
    const int emb = 4 * w;
    u.time1_ = Linear::make(w, emb, rng);
    u.time2_ = Linear::make(emb, emb, rng);
    u.cond_proj_ = Linear::make(cfg.d_cond, emb, rng);
    u.in_conv_ = Conv2d::make(cfg.in_channels, w, 3, 1, 1, rng);

    std::vector<int> ch(cfg.levels);
    for (int l = 0; l < cfg.levels; ++l) ch[l] = w << l;

    int cur = w;
    for (int l = 0; l < cfg.levels; ++l) {
        std::vector<ResBlock> blocks;
        for (int b = 0; b < cfg.blocks_per_level; ++b) {
            blocks.push_back(make_block(cur, ch[l], emb, rng));
            cur = ch[l];
        }
        u.down_.push_back(std::move(blocks));
        if (l + 1 < cfg.levels) u.downsample_.push_back(Conv2d::make(cur, cur, 3, 2, 1, rng));
    }
    u.mid_ = make_block(cur, cur, emb, rng);
    for (int l = cfg.levels - 1; l >= 0; --l) {
        std::vector<ResBlock> blocks;
        for (int b = 0; b < cfg.blocks_per_level; ++b) {
            const int in = b == 0 ? cur + ch[l] : ch[l];
            blocks.push_back(make_block(in, ch[l], emb, rng));
        }
        cur = ch[l];
        u.up_.push_back(std::move(blocks));
        if (l > 0) {
            u.upsample_.push_back(Conv2d::make(cur, ch[l - 1], 3, 1, 1, rng));
            cur = ch[l - 1];
        }
    }
    u.out_norm_ = GroupNorm::make(w);
    u.out_conv_ = Conv2d::make(w, cfg.in_channels, 3, 1, 1, rng, Real(0.5));
    return u;
}

Tensor UNet::predict_eps(const Tensor& z_t, int t, const Tensor& cond) const {
    const int div = 1 << (cfg_.levels - 1);
    if (z_t.rank() != 3 || z_t.dim(0) != cfg_.in_channels || z_t.dim(1) % div != 0 ||
        z_t.dim(2) % div != 0)
        throw DimensionError("U-Net input " + shape_str(z_t.shape()) + " needs " +
                             std::to_string(cfg_.in_channels) + " channels and sides divisible by " +
                             std::to_string(div));
    if (cond.numel() != static_cast<std::size_t>(cfg_.d_cond))
        throw DimensionError("U-Net conditioning has " + std::to_string(cond.numel()) +
                             " elements, expected " + std::to_string(cfg_.d_cond));
    if (t < 0) throw ArgumentError("negative timestep");

    const Tensor temb = Tensor::from({cfg_.base_width}, timestep_embedding(t, cfg_.base_width));
    const Tensor emb = silu(add(time2_(silu(time1_(temb))), cond_proj_(cond)));

    Tensor h = in_conv_(z_t);
    std::vector<Tensor> skips;
    for (int l = 0; l < cfg_.levels; ++l) {
        for (const auto& b : down_[l]) h = b(h, emb);
        skips.push_back(h);
        if (l + 1 < cfg_.levels) h = downsample_[l](h);
    }
    h = mid_(h, emb);
    for (int i = 0; i < cfg_.levels; ++i) {
        const int l = cfg_.levels - 1 - i;
        h = concat_channels(h, skips[l]);
        for (const auto& b : up_[i]) h = b(h, emb);
        if (l > 0) h = upsample_[i](upsample2d(h, 2));
    }
    return out_conv_(silu(out_norm_(h)));
}

NamedParams UNet::params() const {
    NamedParams p;
    time1_.collect(p, "time1");
    time2_.collect(p, "time2");
    cond_proj_.collect(p, "cond_proj");
    in_conv_.collect(p, "in_conv");
    for (std::size_t l = 0; l < down_.size(); ++l) {
        for (std::size_t b = 0; b < down_[l].size(); ++b)
            down_[l][b].collect(p, "down" + std::to_string(l) + "." + std::to_string(b));
        if (l < downsample_.size()) downsample_[l].collect(p, "downsample" + std::to_string(l));
    }
    mid_.collect(p, "mid");
    for (std::size_t i = 0; i < up_.size(); ++i) {
        for (std::size_t b = 0; b < up_[i].size(); ++b)
            up_[i][b].collect(p, "up" + std::to_string(i) + "." + std::to_string(b));
        if (i < upsample_.size()) upsample_[i].collect(p, "upsample" + std::to_string(i));
    }
    out_norm_.collect(p, "out_norm");
    out_conv_.collect(p, "out_conv");
    return p;
}

EpsFn eps_fn(const UNet& unet, const ConditioningVector& cond) {
    return [&unet, &cond](const Tensor& z, int t) { return unet.predict_eps(z, t, cond); };
}

namespace {

std::vector<Real> eval_eps(const EpsFn& eps, const std::vector<Real>& z, const Shape& shape, int t) {
    const Tensor out = eps(Tensor::from(shape, z), t);
    if (out.shape() != shape)
        throw DimensionError("noise predictor returned " + shape_str(out.shape()) + " for " +
                             shape_str(shape));
    return {out.data().begin(), out.data().end()};
}

} // namespace

Tensor ddpm_chain(const EpsFn& eps, const NoiseSchedule& sched, const Tensor& z_T, Rng& rng) {
    NoGradGuard ng;
    const Shape shape = z_T.shape();
    std::vector<Real> z(z_T.data().begin(), z_T.data().end());
    for (int t = sched.T - 1; t >= 0; --t) {
        const std::vector<Real> e = eval_eps(eps, z, shape, t);
        const double coef = sched.beta[t] / std::sqrt(1 - sched.alpha_bar[t]);
        const double inv_sqrt_alpha = 1 / std::sqrt(sched.alpha[t]);
        for (std::size_t i = 0; i < z.size(); ++i)
            z[i] = static_cast<Real>((z[i] - coef * e[i]) * inv_sqrt_alpha);
        if (t > 0) {
            const double var =
                sched.beta[t] * (1 - sched.alpha_bar[t - 1]) / (1 - sched.alpha_bar[t]);
            const double sigma = std::sqrt(var);
            for (auto& v : z) v = static_cast<Real>(v + sigma * rng.normal());
        }
    }
    return Tensor::from(shape, std::move(z));
}

std::vector<Tensor> sample_ddpm(const EpsFn& eps, const NoiseSchedule& sched,
                                const Shape& latent_shape, int n, Rng& rng) {
    if (n < 1) throw ArgumentError("sample_ddpm needs n >= 1");
    std::vector<Tensor> out;
    for (int i = 0; i < n; ++i) {
        Rng chain = rng.split();
        const Tensor z_T = randn(latent_shape, chain);
        out.push_back(ddpm_chain(eps, sched, z_T, chain));
    }
    return out;
}

std::vector<int> ddim_timesteps(int T, int steps) {
    if (steps < 1 || steps > T)
        throw ArgumentError("DDIM steps must lie in [1, " + std::to_string(T) + "], got " +
                            std::to_string(steps));
    std::vector<int> ts(steps);
    for (int i = 0; i < steps; ++i)
        ts[i] = static_cast<int>((static_cast<long long>(i + 1) * T) / steps) - 1;
    return ts;
}

Tensor ddim_chain(const EpsFn& eps, const NoiseSchedule& sched, const Tensor& z_T, int steps,
                  double eta, Rng* rng) {
    const std::vector<int> ts = ddim_timesteps(sched.T, steps);
    if (eta < 0) throw ArgumentError("DDIM eta must be >= 0");
    if (eta > 0 && rng == nullptr) throw ArgumentError("stochastic DDIM needs a generator");
    NoGradGuard ng;
    const Shape shape = z_T.shape();
    std::vector<Real> z(z_T.data().begin(), z_T.data().end());
    for (int k = steps - 1; k >= 0; --k) {
        const int t = ts[k];
        const double ab = sched.alpha_bar[t];
        const double ab_prev = k > 0 ? sched.alpha_bar[ts[k - 1]] : 1.0;
        const std::vector<Real> e = eval_eps(eps, z, shape, t);
        const double sigma =
            eta * std::sqrt((1 - ab_prev) / (1 - ab)) * std::sqrt(1 - ab / ab_prev);
        const double dir = std::sqrt(std::max(0.0, 1 - ab_prev - sigma * sigma));
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double x0 = (z[i] - std::sqrt(1 - ab) * e[i]) / std::sqrt(ab);
            z[i] = static_cast<Real>(std::sqrt(ab_prev) * x0 + dir * e[i]);
        }
        if (sigma > 0)
            for (auto& v : z) v = static_cast<Real>(v + sigma * rng->normal());
    }
    return Tensor::from(shape, std::move(z));
}

Tensor sample_ddim(const EpsFn& eps, const NoiseSchedule& sched, const Shape& latent_shape,
                   int steps, Rng& rng) {
    ddim_timesteps(sched.T, steps);
    const Tensor z_T = randn(latent_shape, rng);
    return ddim_chain(eps, sched, z_T, steps);
}

} // namespace dsf
