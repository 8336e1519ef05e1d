#include "dsf/image.hpp"

#include "dsf/error.hpp"
#include "dsf/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace dsf {

Tensor solid_image(int height, int width, Rgb color) {
    std::vector<Real> v(static_cast<std::size_t>(3) * height * width);
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    std::fill(v.begin(), v.begin() + plane, color.r);
    std::fill(v.begin() + plane, v.begin() + 2 * plane, color.g);
    std::fill(v.begin() + 2 * plane, v.end(), color.b);
    return Tensor::from({3, height, width}, std::move(v));
}

void check_image(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw DimensionError("expected an RGB image [3 x H x W], got " + shape_str(image.shape()));
}

Rgb pixel(const Tensor& image, int y, int x) {
    const std::size_t H = image.dim(1), W = image.dim(2);
    const auto d = image.data();
    const std::size_t i = static_cast<std::size_t>(y) * W + x;
    return {d[i], d[H * W + i], d[2 * H * W + i]};
}

namespace {

std::uint8_t to_byte(Real v) {
    const Real c = std::clamp(v, Real(0), Real(1));
    return static_cast<std::uint8_t>(std::lround(c * Real(255)));
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}

void png_flush_noop(png_structp) {}

struct ReadCursor {
    const std::vector<std::uint8_t>* bytes;
    std::size_t pos;
};

void png_read_from_vector(png_structp png, png_bytep data, png_size_t len) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + len > cur->bytes->size()) png_error(png, "truncated PNG");
    std::memcpy(data, cur->bytes->data() + cur->pos, len);
    cur->pos += len;
}

} // namespace

std::vector<std::uint8_t> encode_png(const Tensor& image) {
    check_image(image);
    const int H = image.dim(1), W = image.dim(2);
    std::vector<std::uint8_t> rows(static_cast<std::size_t>(H) * W * 3);
    const auto d = image.data();
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) rows[i * 3 + c] = to_byte(d[c * plane + i]);

    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encoding failed");
    }
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, W, H, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (int y = 0; y < H; ++y) png_write_row(png, rows.data() + static_cast<std::size_t>(y) * W * 3);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Tensor decode_png(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        throw FormatError("not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    ReadCursor cur{&bytes, 0};
    std::vector<std::uint8_t> rgb;
    std::vector<png_bytep> row_ptrs;
    png_uint_32 W = 0, H = 0;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("malformed PNG data");
    }
    png_set_read_fn(png, &cur, png_read_from_vector);
    png_read_info(png, info);
    W = png_get_image_width(png, info);
    H = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
        png_set_gray_to_rgb(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    if (png_get_rowbytes(png, info) != W * 3) png_error(png, "unsupported PNG layout");
    rgb.resize(static_cast<std::size_t>(W) * H * 3);
    row_ptrs.resize(H);
    for (png_uint_32 y = 0; y < H; ++y) row_ptrs[y] = rgb.data() + static_cast<std::size_t>(y) * W * 3;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t plane = static_cast<std::size_t>(W) * H;
    std::vector<Real> v(plane * 3);
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) v[c * plane + i] = static_cast<Real>(rgb[i * 3 + c]) / Real(255);
    return Tensor::from({3, static_cast<int>(H), static_cast<int>(W)}, std::move(v));
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
    write_file_atomic(path, encode_png(image));
}

Tensor read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

void write_pgm(const std::filesystem::path& path, const Tensor& mask) {
    if (mask.rank() != 2) throw DimensionError("mask must be [H x W], got " + shape_str(mask.shape()));
    const int H = mask.dim(0), W = mask.dim(1);
    std::string header = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    for (Real v : mask.data()) bytes.push_back(v > Real(0.5) ? 255 : 0);
    write_file_atomic(path, bytes);
}

Tensor resize_bilinear(const Tensor& image, int height, int width) {
    if (image.rank() != 3) throw DimensionError("resize expects [C x H x W]");
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    if (H == height && W == width) return image.detach();
    const auto d = image.data();
    std::vector<Real> out(static_cast<std::size_t>(C) * height * width);
    // Integer downscale: box average, which is what bilinear would alias away.
    if (H % height == 0 && W % width == 0 && H >= height && W >= width) {
        const int fy = H / height, fx = W / width;
        const Real inv = Real(1) / static_cast<Real>(fy * fx);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    Real s = 0;
                    for (int dy = 0; dy < fy; ++dy)
                        for (int dx = 0; dx < fx; ++dx)
                            s += d[(static_cast<std::size_t>(c) * H + y * fy + dy) * W + x * fx + dx];
                    out[(static_cast<std::size_t>(c) * height + y) * width + x] = s * inv;
                }
        return Tensor::from({C, height, width}, std::move(out));
    }
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < height; ++y) {
            const Real sy = std::clamp((y + Real(0.5)) * H / height - Real(0.5), Real(0), Real(H - 1));
            const int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, H - 1);
            const Real wy = sy - y0;
            for (int x = 0; x < width; ++x) {
                const Real sx =
                    std::clamp((x + Real(0.5)) * W / width - Real(0.5), Real(0), Real(W - 1));
                const int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, W - 1);
                const Real wx = sx - x0;
                auto at = [&](int yy, int xx) { return d[(static_cast<std::size_t>(c) * H + yy) * W + xx]; };
                out[(static_cast<std::size_t>(c) * height + y) * width + x] =
                    (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                    wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
            }
        }
    return Tensor::from({C, height, width}, std::move(out));
}

Tensor gaussian_blur(const Tensor& image, Real sigma) {
    if (sigma < 0) throw ArgumentError("blur sigma must be >= 0");
    if (image.rank() != 3) throw DimensionError("blur expects [C x H x W]");
    if (sigma == 0) return image;
    const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    std::vector<Real> k(2 * radius + 1);
    Real ks = 0;
    for (int i = -radius; i <= radius; ++i) ks += k[i + radius] = std::exp(-Real(0.5) * i * i / (sigma * sigma));
    for (auto& v : k) v /= ks;
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    const auto d = image.data();
    std::vector<Real> tmp(d.size()), out(d.size());
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                Real s = 0;
                for (int i = -radius; i <= radius; ++i) {
                    const int xx = std::clamp(x + i, 0, W - 1);
                    s += k[i + radius] * d[(static_cast<std::size_t>(c) * H + y) * W + xx];
                }
                tmp[(static_cast<std::size_t>(c) * H + y) * W + x] = s;
            }
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                Real s = 0;
                for (int i = -radius; i <= radius; ++i) {
                    const int yy = std::clamp(y + i, 0, H - 1);
                    s += k[i + radius] * tmp[(static_cast<std::size_t>(c) * H + yy) * W + x];
                }
                out[(static_cast<std::size_t>(c) * H + y) * W + x] = s;
            }
    return Tensor::from(image.shape(), std::move(out));
}

Tensor tile_images(const std::vector<Tensor>& images, int columns, Rgb fill) {
    if (images.empty()) throw ArgumentError("tile_images: no images");
    if (columns < 1) throw ArgumentError("tile_images: columns must be >= 1");
    for (const auto& im : images) check_image(im);
    const int h = images[0].dim(1), w = images[0].dim(2);
    for (const auto& im : images)
        if (im.dim(1) != h || im.dim(2) != w) throw DimensionError("tile_images: size mismatch");
    const int n = static_cast<int>(images.size());
    const int cols = std::min(columns, n), rows = (n + cols - 1) / cols;
    Tensor sheet = solid_image(rows * h, cols * w, fill);
    auto out = sheet.mutable_data();
    const std::size_t H = static_cast<std::size_t>(rows) * h, W = static_cast<std::size_t>(cols) * w;
    for (int i = 0; i < n; ++i) {
        const auto d = images[i].data();
        const int oy = (i / cols) * h, ox = (i % cols) * w;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    out[(c * H + oy + y) * W + ox + x] = d[(static_cast<std::size_t>(c) * h + y) * w + x];
    }
    return sheet;
}

} // namespace dsf
