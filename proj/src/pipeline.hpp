#pragma once

#include "preprocess.hpp"
#include "registration.hpp"

namespace mplreg {

struct PreprocessSettings {
    bool enabled = true;
    double target_spacing = 5.0;
    Dims3 out_dims{128, 128, 128};
    int margin = 2;
    /// Pad values are in raw input units (e.g. -1000 for CT in HU).
    double fixed_pad = 0.0;
    double moving_pad = 0.0;
    std::optional<std::pair<double, double>> fixed_clip;
    std::optional<std::pair<double, double>> moving_clip;

    void validate() const;
};

struct PreparedPair {
    RegistrationPair pair;
    bool fixed_overflow = false;
    bool moving_overflow = false;
    /// Crop box of the moving side on its resampled grid (preprocessing only).
    std::optional<RoiBox> moving_roi;
};

/// Resample, crop around each label, pad and normalize. The moving side is
/// then placed on the fixed grid: registration works in the shared voxel
/// frame of the two cropped volumes. With preprocessing disabled the inputs
/// are used as they are and must already share a grid.
PreparedPair prepare_pair(const Volume& fixed, const LabelMask& fixed_label, const Volume& moving,
                          const LabelMask& moving_label, const PreprocessSettings& settings);

/// Puts a volume co-aligned with the raw moving image onto the prepared
/// grid: same resampling and crop as the moving image, padded with zeros,
/// intensities left as they are.
Volume prepare_companion(const Volume& companion, const Volume& raw_moving, const PreparedPair& prepared,
                         const PreprocessSettings& settings);

} // namespace mplreg
