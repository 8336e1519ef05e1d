#include "dsf/bundle.hpp"

#include "dsf/error.hpp"
#include "dsf/io.hpp"

#include <zlib.h>

#include <array>
#include <cstring>

namespace dsf {

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (size > 0) {
        const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
        crc = crc32(crc, data, chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void bytes(const std::vector<std::uint8_t>& b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape()) i32(d);
        for (Real v : t.data()) f64(static_cast<double>(v));
    }
    void params(const NamedParams& p) {
        u32(static_cast<std::uint32_t>(p.size()));
        for (const auto& [name, t] : p) {
            str(name);
            tensor(t);
        }
    }
    std::vector<std::uint8_t>& buffer() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end_ - p_) < n) throw FormatError("bundle is truncated");
    }
    std::uint8_t u8() {
        need(1);
        return *p_++;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[i]) << (8 * i);
        p_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[i]) << (8 * i);
        p_ += 8;
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(p_), n);
        p_ += n;
        return s;
    }
    Tensor tensor() {
        const std::uint32_t rank = u32();
        if (rank > 8) throw FormatError("tensor rank " + std::to_string(rank) + " is not plausible");
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = i32();
            if (d <= 0) throw FormatError("tensor has a non-positive dimension");
            n *= static_cast<std::size_t>(d);
        }
        need(n * 8);
        std::vector<Real> v(n);
        for (auto& x : v) x = static_cast<Real>(f64());
        return Tensor::from(shape, std::move(v));
    }
    NamedParams params() {
        const std::uint32_t count = u32();
        NamedParams out;
        for (std::uint32_t i = 0; i < count; ++i) {
            std::string name = str();
            out.emplace_back(std::move(name), tensor());
        }
        return out;
    }
    bool done() const { return p_ == end_; }

private:
    const std::uint8_t* p_;
    const std::uint8_t* end_;
};

using Tag = std::array<char, 4>;

Tag tag(const char (&s)[5]) { return {s[0], s[1], s[2], s[3]}; }

void write_section(Writer& out, const Tag& t, Writer& payload) {
    for (char c : t) out.u8(static_cast<std::uint8_t>(c));
    const auto& p = payload.buffer();
    out.u64(p.size());
    out.bytes(p);
    out.u32(crc32_of(p.data(), p.size()));
}

void load_params_into(const NamedParams& dst, const NamedParams& src) {
    if (dst.size() != src.size())
        throw FormatError("parameter count " + std::to_string(src.size()) + " does not match model (" +
                          std::to_string(dst.size()) + ")");
    assign_params(dst, src);
}

LatentCodec read_codec(Reader& r) {
    CodecConfig cfg;
    cfg.image_size = r.i32();
    cfg.latent_channels = r.i32();
    cfg.hidden1 = r.i32();
    cfg.hidden2 = r.i32();
    const bool frozen = r.u8() != 0;
    const double scale = r.f64();
    const std::uint32_t log_n = r.u32();
    std::vector<Real> log;
    for (std::uint32_t i = 0; i < log_n; ++i) log.push_back(static_cast<Real>(r.f64()));
    Rng dummy(0);
    LatentCodec codec;
    try {
        codec = LatentCodec::init(cfg, dummy);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("codec section: ") + e.what());
    }
    load_params_into(codec.params(), r.params());
    codec.latent_scale = static_cast<Real>(scale);
    codec.training_log = std::move(log);
    if (frozen) codec.freeze();
    return codec;
}

UNet read_unet(Reader& r) {
    UNetConfig cfg;
    cfg.in_channels = r.i32();
    cfg.base_width = r.i32();
    cfg.levels = r.i32();
    cfg.blocks_per_level = r.i32();
    cfg.d_cond = r.i32();
    if (cfg.base_width > 4096 || cfg.levels > 8 || cfg.blocks_per_level > 64 || cfg.d_cond > 1 << 20)
        throw FormatError("U-Net section has implausible sizes");
    Rng dummy(0);
    UNet unet;
    try {
        unet = UNet::init(cfg, dummy);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("U-Net section: ") + e.what());
    }
    load_params_into(unet.params(), r.params());
    return unet;
}

Discriminator read_disc(Reader& r) {
    DiscriminatorConfig cfg;
    cfg.latent_channels = r.i32();
    cfg.latent_size = r.i32();
    cfg.width = r.i32();
    cfg.zero_final = r.u8() != 0;
    if (cfg.width > 4096 || cfg.latent_size > 4096 || cfg.latent_channels > 4096)
        throw FormatError("discriminator section has implausible sizes");
    Rng dummy(0);
    Discriminator d;
    try {
        d = Discriminator::init(cfg, dummy);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("discriminator section: ") + e.what());
    }
    load_params_into(d.params(), r.params());
    return d;
}

} // namespace

std::vector<std::uint8_t> serialize_bundle(const ModelBundle& b) {
    std::vector<std::pair<Tag, Writer>> sections;
    if (b.codec) {
        Writer w;
        const auto& c = b.codec->config();
        w.i32(c.image_size);
        w.i32(c.latent_channels);
        w.i32(c.hidden1);
        w.i32(c.hidden2);
        w.u8(b.codec->frozen() ? 1 : 0);
        w.f64(b.codec->latent_scale);
        w.u32(static_cast<std::uint32_t>(b.codec->training_log.size()));
        for (Real v : b.codec->training_log) w.f64(v);
        w.params(b.codec->params());
        sections.emplace_back(tag("CODC"), std::move(w));
    }
    if (b.generator) {
        Writer w;
        const auto& c = b.generator->unet.config();
        w.i32(c.in_channels);
        w.i32(c.base_width);
        w.i32(c.levels);
        w.i32(c.blocks_per_level);
        w.i32(c.d_cond);
        w.params(b.generator->unet.params());
        sections.emplace_back(tag("UNET"), std::move(w));
        Writer wc;
        wc.u8(b.generator->cond.trainable ? 1 : 0);
        wc.tensor(b.generator->cond.embedding);
        sections.emplace_back(tag("COND"), std::move(wc));
    }
    if (b.discriminator) {
        Writer w;
        const auto& c = b.discriminator->config();
        w.i32(c.latent_channels);
        w.i32(c.latent_size);
        w.i32(c.width);
        w.u8(c.zero_final ? 1 : 0);
        w.params(b.discriminator->params());
        sections.emplace_back(tag("DISC"), std::move(w));
    }
    if (b.schedule) {
        Writer w;
        w.i32(b.schedule->T);
        for (int t = 0; t < b.schedule->T; ++t) w.f64(b.schedule->beta[t]);
        sections.emplace_back(tag("SCHD"), std::move(w));
    }
    if (!b.config_text.empty()) {
        Writer w;
        w.str(b.config_text);
        sections.emplace_back(tag("CONF"), std::move(w));
    }
    if (!b.loss_log.empty()) {
        Writer w;
        w.u32(static_cast<std::uint32_t>(b.loss_log.size()));
        for (const auto& e : b.loss_log) {
            w.i32(e.epoch);
            w.f64(e.l_diff);
            w.f64(e.l_dis);
            w.f64(e.l_total);
        }
        sections.emplace_back(tag("LOSS"), std::move(w));
    }

    Writer out;
    for (char c : tag("DSFB")) out.u8(static_cast<std::uint8_t>(c));
    out.u32(kBundleVersion);
    out.u32(static_cast<std::uint32_t>(sections.size()));
    for (auto& [t, w] : sections) write_section(out, t, w);
    auto& bytes = out.buffer();
    const std::uint32_t crc = crc32_of(bytes.data(), bytes.size());
    out.u32(crc);
    return std::move(out.buffer());
}

ModelBundle deserialize_bundle(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16) throw FormatError("bundle is truncated");
    if (std::memcmp(bytes.data(), "DSFB", 4) != 0) throw FormatError("not a bundle (bad magic)");
    Reader head(bytes.data() + 4, bytes.size() - 4);
    const std::uint32_t version = head.u32();
    if (version != kBundleVersion)
        throw FormatError("unsupported bundle version " + std::to_string(version));

    // Walk the section table before trusting any payload.
    const std::size_t body_end = bytes.size() - 4;
    Reader walk(bytes.data() + 8, body_end - 8);
    const std::uint32_t count = walk.u32();
    struct Span {
        Tag tag;
        std::size_t offset, length;
        std::uint32_t crc;
    };
    std::vector<Span> spans;
    std::size_t pos = 12;
    for (std::uint32_t i = 0; i < count; ++i) {
        Span s;
        for (auto& c : s.tag) c = static_cast<char>(walk.u8());
        s.length = walk.u64();
        s.offset = pos + 12;
        if (s.length > body_end - std::min(body_end, s.offset)) throw FormatError("bundle is truncated");
        walk.need(s.length);
        for (std::size_t k = 0; k < s.length; ++k) walk.u8();
        s.crc = walk.u32();
        pos = s.offset + s.length + 4;
        spans.push_back(s);
    }
    if (!walk.done()) throw FormatError("bundle has trailing bytes after the last section");

    Reader trailer(bytes.data() + body_end, 4);
    if (trailer.u32() != crc32_of(bytes.data(), body_end))
        throw CorruptionError("bundle checksum mismatch");
    for (const auto& s : spans)
        if (crc32_of(bytes.data() + s.offset, s.length) != s.crc)
            throw CorruptionError("section " + std::string(s.tag.data(), 4) + " checksum mismatch");

    ModelBundle b;
    std::optional<UNet> unet;
    std::optional<ConditioningVector> cond;
    for (const auto& s : spans) {
        Reader r(bytes.data() + s.offset, s.length);
        const std::string t(s.tag.data(), 4);
        if (t == "CODC") b.codec = read_codec(r);
        else if (t == "UNET") unet = read_unet(r);
        else if (t == "COND") {
            ConditioningVector c;
            c.trainable = r.u8() != 0;
            c.embedding = r.tensor();
            c.embedding.set_requires_grad(c.trainable);
            cond = c;
        } else if (t == "DISC") b.discriminator = read_disc(r);
        else if (t == "SCHD") {
            const int T = r.i32();
            if (T < 1 || static_cast<std::size_t>(T) * 8 != s.length - 4)
                throw FormatError("schedule section has an invalid length");
            NoiseSchedule sched;
            sched.T = T;
            double prod = 1;
            for (int k = 0; k < T; ++k) {
                const double beta = r.f64();
                sched.beta.push_back(beta);
                sched.alpha.push_back(1 - beta);
                prod *= 1 - beta;
                sched.alpha_bar.push_back(prod);
            }
            try {
                validate_schedule(sched);
            } catch (const ArgumentError& e) {
                throw FormatError(std::string("schedule section: ") + e.what());
            }
            b.schedule = sched;
        } else if (t == "CONF") b.config_text = r.str();
        else if (t == "LOSS") {
            const std::uint32_t n = r.u32();
            for (std::uint32_t k = 0; k < n; ++k) {
                EpochLosses e;
                e.epoch = r.i32();
                e.l_diff = static_cast<Real>(r.f64());
                e.l_dis = static_cast<Real>(r.f64());
                e.l_total = static_cast<Real>(r.f64());
                b.loss_log.push_back(e);
            }
        } else {
            throw FormatError("unknown bundle section '" + t + "'");
        }
        if (!r.done()) throw FormatError("section " + t + " has unread bytes");
    }
    if (unet.has_value() != cond.has_value())
        throw FormatError("bundle has a U-Net without conditioning or vice versa");
    if (unet) {
        if (cond->embedding.numel() != static_cast<std::size_t>(unet->config().d_cond))
            throw FormatError("conditioning length does not match the U-Net");
        b.generator = Generator{std::move(*unet), std::move(*cond)};
    }
    return b;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
    const auto bytes = serialize_bundle(bundle);
    write_file_atomic(path, bytes);
}

ModelBundle load_bundle(const std::filesystem::path& path) { return deserialize_bundle(read_file(path)); }

} // namespace dsf
