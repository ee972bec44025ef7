#include "overlay.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace mplreg {

Slice2D extract_slice(const Volume& v, int axis, int index)
{
    if (axis < 0 || axis > 2)
        fail(ErrorCode::InvalidArgument, "slice axis must be 0, 1 or 2");
    const Dims3& d = v.grid().dims;
    if (index < 0 || index >= d[axis])
        fail(ErrorCode::InvalidArgument, "slice index " + std::to_string(index) + " outside [0, " +
                                             std::to_string(d[axis] - 1) + "] on axis " + std::to_string(axis));
    const int ax = axis == 0 ? 1 : 0;
    const int ay = axis == 2 ? 1 : 2;
    Slice2D s;
    s.width = d[ax];
    s.height = d[ay];
    s.values.resize(std::size_t(s.width) * std::size_t(s.height));
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            int ijk[3];
            ijk[axis] = index;
            ijk[ax] = x;
            ijk[ay] = y;
            s.values[std::size_t(y) * std::size_t(s.width) + std::size_t(x)] = v.at(ijk[0], ijk[1], ijk[2]);
        }
    return s;
}

std::vector<double> sobel_magnitude(const Slice2D& s)
{
    std::vector<double> out(s.values.size());
    auto px = [&](int x, int y) {
        return s.at(std::clamp(x, 0, s.width - 1), std::clamp(y, 0, s.height - 1));
    };
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
            const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
            out[std::size_t(y) * std::size_t(s.width) + std::size_t(x)] = std::sqrt(gx * gx + gy * gy);
        }
    return out;
}

std::vector<bool> edge_mask(const Slice2D& s, double quantile)
{
    if (!(quantile >= 0.0 && quantile < 1.0))
        fail(ErrorCode::InvalidArgument, "edge quantile must lie in [0,1)");
    const std::vector<double> mag = sobel_magnitude(s);
    std::vector<double> sorted = mag;
    const std::size_t q = std::min(sorted.size() - 1, std::size_t(quantile * double(sorted.size())));
    std::nth_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(q), sorted.end());
    const double threshold = sorted[q];
    std::vector<bool> out(mag.size());
    for (std::size_t n = 0; n < mag.size(); ++n)
        out[n] = mag[n] > 0.0 && mag[n] > threshold;
    return out;
}

Gray8 render_overlay(const Volume& fixed, const Volume& moving, const OverlaySettings& st)
{
    require_compatible(fixed.grid(), moving.grid(), "overlay");
    const int index = st.index < 0 ? fixed.grid().dims[std::clamp(st.axis, 0, 2)] / 2 : st.index;
    const Slice2D f = extract_slice(fixed, st.axis, index);
    const Slice2D m = extract_slice(moving, st.axis, index);

    double lo, hi;
    if (st.window) {
        if (!(*st.window > 0.0))
            fail(ErrorCode::InvalidArgument, "window must be positive");
        const double level = st.level.value_or(0.5);
        lo = level - 0.5 * *st.window;
        hi = level + 0.5 * *st.window;
    } else {
        auto [mn, mx] = std::minmax_element(f.values.begin(), f.values.end());
        lo = *mn;
        hi = *mx;
        if (st.level) {
            const double half = std::max(hi - *st.level, *st.level - lo);
            lo = *st.level - half;
            hi = *st.level + half;
        }
    }
    Gray8 out{f.width, f.height, std::vector<std::uint8_t>(f.values.size())};
    const double range = hi > lo ? hi - lo : 1.0;
    for (std::size_t n = 0; n < f.values.size(); ++n) {
        const double t = std::clamp((f.values[n] - lo) / range, 0.0, 1.0);
        out.pixels[n] = std::uint8_t(std::lround(255.0 * t));
    }
    const std::vector<bool> edges = edge_mask(m, st.edge_quantile);
    for (std::size_t n = 0; n < edges.size(); ++n)
        if (edges[n])
            out.pixels[n] = 255;
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};

} // namespace

void write_png(const Gray8& image, const std::filesystem::path& path)
{
    std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
    if (!file)
        fail(ErrorCode::Io, "cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorCode::Io, "libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::Io, "libpng failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, png_uint_32(image.width), png_uint_32(image.height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    // Row 0 of the slice is written last so +y points up in viewers.
    for (int y = image.height - 1; y >= 0; --y)
        png_write_row(png, image.pixels.data() + std::size_t(y) * std::size_t(image.width));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Gray8 read_png(const std::filesystem::path& path)
{
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        fail(ErrorCode::Io, "cannot read PNG " + path.string() + ": " + img.message);
    img.format = PNG_FORMAT_GRAY;
    Gray8 out{int(img.width), int(img.height), std::vector<std::uint8_t>(PNG_IMAGE_SIZE(img))};
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&img);
        fail(ErrorCode::Io, "cannot decode PNG " + path.string());
    }
    // Undo the bottom-up row order of write_png.
    for (int y = 0; y < out.height / 2; ++y)
        std::swap_ranges(out.pixels.begin() + std::ptrdiff_t(y) * out.width,
                         out.pixels.begin() + std::ptrdiff_t(y + 1) * out.width,
                         out.pixels.begin() + std::ptrdiff_t(out.height - 1 - y) * out.width);
    return out;
}

} // namespace mplreg
