#pragma once

// RGB images are Tensors of shape [3 x H x W] with values in [0, 1];
// masks are [H x W].

#include "dsf/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace dsf {

struct Rgb {
    Real r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

Tensor solid_image(int height, int width, Rgb color);
Rgb pixel(const Tensor& image, int y, int x);
void check_image(const Tensor& image);

std::vector<std::uint8_t> encode_png(const Tensor& image);
Tensor decode_png(const std::vector<std::uint8_t>& bytes);
void write_png(const std::filesystem::path& path, const Tensor& image);
Tensor read_png(const std::filesystem::path& path);
/// 8-bit binary PGM (P5) of a mask, 255 where mask > 0.5.
void write_pgm(const std::filesystem::path& path, const Tensor& mask);

Tensor resize_bilinear(const Tensor& image, int height, int width);
/// Separable Gaussian blur with clamped borders; sigma 0 returns the input.
Tensor gaussian_blur(const Tensor& image, Real sigma);
/// Places images side by side in a grid of `columns` tiles.
Tensor tile_images(const std::vector<Tensor>& images, int columns, Rgb fill);

} // namespace dsf
