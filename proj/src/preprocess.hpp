#pragma once

#include "image.hpp"

#include <optional>
#include <utility>

namespace mplreg {

/// Resample onto an isotropic grid with the given spacing (mm). Output voxel
/// centers tile the original extent from its corner; values are trilinear
/// with clamp-to-edge.
template <class Tag>
Image<Tag> resample_isotropic(const Image<Tag>& v, double target_spacing);

/// Inclusive voxel bounding box.
struct RoiBox {
    Dims3 lo{0, 0, 0};
    Dims3 hi{0, 0, 0};

    Dims3 size() const { return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1}; }
};

/// Tight box of mask voxels > 0.5, dilated by margin and clipped to the grid.
/// Throws EmptyRoi when no voxel qualifies.
RoiBox compute_roi(const LabelMask& mask, int margin = 2);

template <class Tag>
struct CropResult {
    Image<Tag> image;
    /// Set when the ROI did not fit out_dims and was center-cropped.
    bool overflow = false;
};

/// Centers the ROI inside an out_dims grid, filling the rest with pad_value.
/// The origin moves so retained voxels keep their world coordinates.
template <class Tag>
CropResult<Tag> crop_pad(const Image<Tag>& v, const RoiBox& roi, Dims3 out_dims, double pad_value);

/// Affine map to [0,1]. With clip, values are clamped to [lo,hi] and
/// [lo,hi] maps to [0,1]; without, the data range is used.
Volume normalize_minmax(const Volume& v, std::optional<std::pair<double, double>> clip = std::nullopt);

} // namespace mplreg
