#pragma once

#include "image.hpp"
#include "transform.hpp"

#include <string>

namespace mplreg {

/// 2|A n B| / (|A| + |B|) after binarizing both masks at the threshold.
/// Two empty masks score 1.
double dice(const LabelMask& a, const LabelMask& b, double threshold = 0.5);

struct MetricsReport {
    double dice = 0.0;
    /// Percent of voxels with a negative Jacobian determinant.
    double pct_neg_jacobian = 0.0;
    /// RMS displacement in voxels.
    double field_rms = 0.0;
    double runtime_seconds = 0.0;
};

MetricsReport evaluate_metrics(const LabelMask& warped_label, const LabelMask& fixed_label,
                               const DisplacementField* field, double runtime_seconds = 0.0);

/// JSON object text. The runtime is left out unless asked for, so reports of
/// identical runs compare equal byte for byte.
std::string metrics_to_json(const MetricsReport& m, bool include_runtime = false);

/// "| method | DSC | %J |" row in the comparison-table column order.
std::string metrics_markdown_row(const std::string& method, const MetricsReport& m);
std::string metrics_markdown_header();

} // namespace mplreg
