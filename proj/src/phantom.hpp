#pragma once

#include "image.hpp"
#include "transform.hpp"

#include <cstdint>
#include <filesystem>

namespace mplreg {

struct PhantomParams {
    Dims3 dims{64, 64, 64};
    Vec3 spacing{5.0, 5.0, 5.0};
    int lung_count = 2;
    /// Max displacement magnitude of the ground-truth field, voxels.
    double amplitude = 4.0;
    /// Gaussian sigma applied to the white-noise field, voxels.
    double smoothness = 8.0;
    double noise_sigma = 0.02;
    /// Exponent of the modality-B transfer v -> (1 - v)^gamma.
    double gamma = 1.5;
    /// Partial-volume blur of the rendered anatomy, voxels.
    double render_blur = 0.7;
    int vessels_per_lung = 6;

    void validate() const;
};

struct PhantomCase {
    Volume fixed;
    Volume moving;
    LabelMask fixed_label;
    LabelMask moving_label;
    DisplacementField true_field;
    /// Functional map co-aligned with the moving image, and the same map in fixed space.
    Volume companion;
    Volume companion_fixed;
    std::uint64_t seed = 0;
    PhantomParams params;
};

/// White noise smoothed per component, rescaled to max |u| == amplitude.
/// Redrawn with a new sub-seed while any Jacobian determinant is <= 0.05;
/// throws Generation after 20 attempts.
DisplacementField random_smooth_field(std::uint64_t seed, const GridMeta& grid, double amplitude, double smoothness);

PhantomCase generate_phantom_pair(std::uint64_t seed, const PhantomParams& params = {});

/// Case directory: fixed/moving volumes and labels, true_field (+ sidecar),
/// companion volumes and phantom.json with seed and parameters.
void write_phantom_case(const PhantomCase& c, const std::filesystem::path& dir);

/// Reads what write_phantom_case wrote. The companion volumes and true
/// field are optional on disk.
PhantomCase read_phantom_case(const std::filesystem::path& dir);

/// Pearson correlation of two equally sized intensity arrays.
double pearson(std::span<const double> a, std::span<const double> b);

} // namespace mplreg
