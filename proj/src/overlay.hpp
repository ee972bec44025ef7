#pragma once

#include "image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace mplreg {

struct Slice2D {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    double at(int x, int y) const { return values[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }
};

struct Gray8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
};

/// axis 0 keeps (j,k), axis 1 keeps (i,k), axis 2 keeps (i,j).
/// Throws InvalidArgument when the index is outside the volume.
Slice2D extract_slice(const Volume& v, int axis, int index);

/// Sobel gradient magnitude with clamp-to-edge borders.
std::vector<double> sobel_magnitude(const Slice2D& s);

/// Pixels whose Sobel magnitude is positive and above the given quantile.
std::vector<bool> edge_mask(const Slice2D& s, double quantile = 0.9);

struct OverlaySettings {
    int axis = 2;
    /// Negative selects the middle slice.
    int index = -1;
    /// Display window; the fixed slice's range when unset.
    std::optional<double> window;
    std::optional<double> level;
    double edge_quantile = 0.9;
};

/// Fixed slice under window/level, with the moving slice's edges burned in
/// at 255.
Gray8 render_overlay(const Volume& fixed, const Volume& moving, const OverlaySettings& settings);

void write_png(const Gray8& image, const std::filesystem::path& path);
Gray8 read_png(const std::filesystem::path& path);

} // namespace mplreg
