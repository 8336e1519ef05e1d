// Regenerates the bundled stroke fonts in assets/fonts from one skeleton.
//
//   dsf_make_fonts <output_dir>

#include "dsf/glyph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>

using dsf::Point;
using dsf::Polyline;
using dsf::Real;
using dsf::StrokeFont;

namespace {

constexpr Real L = 0.22, R = 0.78, T = 0.15, B = 0.85, CX = 0.5;

Polyline line(std::initializer_list<Point> pts) { return Polyline(pts); }

// Elliptical arc from deg0 to deg1 (y down, so 90 degrees is the bottom).
Polyline arc(Real cx, Real cy, Real rx, Real ry, Real deg0, Real deg1, int steps = 16) {
    Polyline out;
    for (int i = 0; i <= steps; ++i) {
        const Real a = (deg0 + (deg1 - deg0) * i / steps) * std::numbers::pi / 180;
        out.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    return out;
}

Polyline join(std::initializer_list<Polyline> parts) {
    Polyline out;
    for (const auto& p : parts)
        for (const auto& q : p)
            if (out.empty() || !(out.back() == q)) out.push_back(q);
    return out;
}

std::map<char, std::vector<Polyline>> skeleton() {
    std::map<char, std::vector<Polyline>> g;
    g['A'] = {line({{L, B}, {CX, T}, {R, B}}), line({{0.32, 0.62}, {0.68, 0.62}})};
    g['B'] = {line({{L, T}, {L, B}}),
              join({line({{L, T}, {0.58, T}}), arc(0.58, 0.325, 0.16, 0.175, -90, 90), line({{L, 0.5}})}),
              join({line({{L, 0.5}, {0.6, 0.5}}), arc(0.6, 0.675, 0.17, 0.175, -90, 90), line({{L, B}})})};
    g['C'] = {arc(0.52, 0.5, 0.28, 0.35, 40, 320, 24)};
    g['D'] = {line({{L, T}, {L, B}}),
              join({line({{L, T}, {0.45, T}}), arc(0.45, 0.5, 0.33, 0.35, -90, 90, 20), line({{L, B}})})};
    g['E'] = {line({{R, T}, {L, T}, {L, B}, {R, B}}), line({{L, 0.5}, {0.68, 0.5}})};
    g['F'] = {line({{R, T}, {L, T}, {L, B}}), line({{L, 0.5}, {0.68, 0.5}})};
    g['G'] = {join({arc(0.52, 0.5, 0.28, 0.35, 320, 20, 24), line({{0.78, 0.52}, {0.56, 0.52}})})};
    g['H'] = {line({{L, T}, {L, B}}), line({{R, T}, {R, B}}), line({{L, 0.5}, {R, 0.5}})};
    g['I'] = {line({{CX, T}, {CX, B}}), line({{0.35, T}, {0.65, T}}), line({{0.35, B}, {0.65, B}})};
    g['J'] = {line({{0.4, T}, {0.74, T}}),
              join({line({{0.65, T}, {0.65, 0.65}}), arc(0.47, 0.65, 0.18, 0.2, 0, 180), line({{0.29, 0.6}})})};
    g['K'] = {line({{L, T}, {L, B}}), line({{R, T}, {L, 0.58}}), line({{0.38, 0.46}, {R, B}})};
    g['L'] = {line({{L, T}, {L, B}, {R, B}})};
    g['M'] = {line({{L, B}, {L, T}, {CX, 0.6}, {R, T}, {R, B}})};
    g['N'] = {line({{L, B}, {L, T}, {R, B}, {R, T}})};
    g['O'] = {arc(CX, 0.5, 0.28, 0.35, 0, 360, 28)};
    g['P'] = {join({line({{L, B}, {L, T}, {0.58, T}}), arc(0.58, 0.33, 0.17, 0.18, -90, 90), line({{L, 0.51}})})};
    g['Q'] = {arc(CX, 0.5, 0.28, 0.35, 0, 360, 28), line({{0.58, 0.68}, {0.8, 0.9}})};
    g['R'] = {join({line({{L, B}, {L, T}, {0.58, T}}), arc(0.58, 0.33, 0.17, 0.18, -90, 90), line({{L, 0.51}})}),
              line({{0.5, 0.51}, {R, B}})};
    g['S'] = {join({arc(CX, 0.325, 0.24, 0.175, -30, -270, 16), arc(CX, 0.675, 0.26, 0.175, -90, 150, 16)})};
    g['T'] = {line({{L, T}, {R, T}}), line({{CX, T}, {CX, B}})};
    g['U'] = {join({line({{L, T}, {L, 0.6}}), arc(CX, 0.6, 0.28, 0.25, 180, 0), line({{R, T}})})};
    g['V'] = {line({{L, T}, {CX, B}, {R, T}})};
    g['W'] = {line({{0.18, T}, {0.34, B}, {CX, 0.4}, {0.66, B}, {0.82, T}})};
    g['X'] = {line({{L, T}, {R, B}}), line({{R, T}, {L, B}})};
    g['Y'] = {line({{L, T}, {CX, 0.5}, {R, T}}), line({{CX, 0.5}, {CX, B}})};
    g['Z'] = {line({{L, T}, {R, T}, {L, B}, {R, B}})};

    g['0'] = {arc(CX, 0.5, 0.24, 0.35, 0, 360, 28), line({{0.38, 0.66}, {0.62, 0.34}})};
    g['1'] = {line({{0.36, 0.28}, {0.52, T}, {0.52, B}}), line({{0.36, B}, {0.68, B}})};
    g['2'] = {join({arc(CX, 0.33, 0.24, 0.18, 200, 360), line({{L, B}, {R, B}})})};
    g['3'] = {join({arc(CX, 0.325, 0.22, 0.175, 200, 450), arc(CX, 0.675, 0.25, 0.175, -90, 160)})};
    g['4'] = {line({{0.62, B}, {0.62, T}, {L, 0.65}, {R, 0.65}})};
    g['5'] = {join({line({{0.74, T}, {0.32, T}, {0.34, 0.48}}), arc(CX, 0.64, 0.25, 0.21, -130, 150)})};
    g['6'] = {join({line({{0.66, 0.17}, {0.42, 0.3}, {0.29, 0.55}, {0.27, 0.66}}),
                    arc(CX, 0.66, 0.23, 0.19, 180, 540, 24)})};
    g['7'] = {line({{L, T}, {R, T}, {0.42, B}})};
    g['8'] = {arc(CX, 0.32, 0.2, 0.17, 0, 360, 20), arc(CX, 0.67, 0.24, 0.18, 0, 360, 20)};
    g['9'] = {join({arc(CX, 0.34, 0.23, 0.19, 0, 360, 24), line({{0.7, 0.6}, {0.55, 0.8}, {0.36, B}})})};
    return g;
}

StrokeFont make_font(const std::string& name, Real thickness, std::function<Point(Point)> xf) {
    StrokeFont f;
    f.name = name;
    f.default_thickness = thickness;
    for (auto& [c, lines] : skeleton()) {
        for (auto& pl : lines)
            for (auto& p : pl) {
                p = xf(p);
                p.x = std::clamp(p.x, Real(0), Real(1));
                p.y = std::clamp(p.y, Real(0), Real(1));
            }
        f.glyphs[c] = lines;
    }
    return f;
}

} // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: %s <output_dir>\n", argv[0]);
        return 2;
    }
    const std::filesystem::path dir = argv[1];
    const auto identity = [](Point p) { return p; };
    const auto shear = [](Real k) {
        return [k](Point p) { return Point{p.x + k * (Real(0.5) - p.y), p.y}; };
    };
    const auto widen = [](Real k) {
        return [k](Point p) { return Point{Real(0.5) + (p.x - Real(0.5)) * k, p.y}; };
    };
    const std::vector<StrokeFont> fonts = {
        make_font("mono-a", 0.08, identity),
        make_font("mono-bold", 0.15, identity),
        make_font("mono-italic", 0.08, shear(0.25)),
        make_font("mono-narrow", 0.06, widen(0.7)),
        make_font("mono-wide", 0.11,
                  [&](Point p) { return shear(-0.12)(widen(1.12)(p)); }),
    };
    for (const auto& f : fonts) {
        dsf::save_stroke_font(f, dir / (f.name + ".sf"));
        std::printf("wrote %s (%zu glyphs)\n", (dir / (f.name + ".sf")).c_str(), f.glyphs.size());
    }
    return 0;
}
