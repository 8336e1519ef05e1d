// Writes the bundled demo style corpus: 25 "bubble" images, 64x64, shaded
// warm-coloured discs on a black background.
//
//   dsf_make_demo_corpus <output_dir> [count] [seed]

#include "dsf/image.hpp"
#include "dsf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

using namespace dsf;

namespace {

Tensor bubble_image(Rng& rng, int size) {
    Tensor img = solid_image(size, size, {0, 0, 0});
    auto d = img.mutable_data();
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    const int discs = 3 + static_cast<int>(rng.below(4));
    for (int k = 0; k < discs; ++k) {
        const Real r = rng.uniform(6, 15);
        const Real cx = rng.uniform(r, size - r), cy = rng.uniform(r, size - r);
        // warm hues: red through yellow
        const Real hue = rng.uniform(0.0, 0.16);
        const Real h6 = hue * 6, f = h6 - std::floor(h6);
        const Real v = rng.uniform(0.75, 1.0), s = rng.uniform(0.6, 1.0);
        const Rgb base = h6 < 1 ? Rgb{v, v * (1 - s * (1 - f)), v * (1 - s)}
                                : Rgb{v * (1 - s * f), v, v * (1 - s)};
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const Real dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                const Real dist = std::sqrt(dx * dx + dy * dy);
                const Real cover = std::clamp(r + 0.5 - dist, Real(0), Real(1));
                if (cover <= 0) continue;
                // highlight towards the upper left
                const Real hx = dx + 0.35 * r, hy = dy + 0.35 * r;
                const Real shade = 0.55 + 0.45 * std::exp(-(hx * hx + hy * hy) / (0.5 * r * r));
                const std::size_t i = static_cast<std::size_t>(y) * size + x;
                const Real c[3] = {base.r * shade, base.g * shade, base.b * shade};
                for (int ch = 0; ch < 3; ++ch)
                    d[ch * plane + i] = d[ch * plane + i] * (1 - cover) + std::min(Real(1), c[ch]) * cover;
            }
    }
    return img;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s <output_dir> [count] [seed]\n", argv[0]);
        return 2;
    }
    const std::filesystem::path dir = argv[1];
    const int count = argc > 2 ? std::stoi(argv[2]) : 25;
    const std::uint64_t seed = argc > 3 ? std::stoull(argv[3]) : 2023;
    Rng rng = Rng::stream(seed, "demo-corpus");
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "style_%02d.png", i);
        write_png(dir / name, bubble_image(rng, 64));
    }
    std::printf("wrote %d images to %s\n", count, dir.c_str());
    return 0;
}
