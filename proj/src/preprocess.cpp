#include "preprocess.hpp"

#include "parallel.hpp"
#include "sampling.hpp"

#include <algorithm>
#include <limits>

namespace mplreg {

template <class Tag>
Image<Tag> resample_isotropic(const Image<Tag>& v, double target_spacing)
{
    if (!(target_spacing > 0.0) || !std::isfinite(target_spacing))
        fail(ErrorCode::InvalidArgument, "target spacing must be positive");
    const GridMeta& in = v.grid();

    GridMeta out;
    Vec3 scale;
    for (int d = 0; d < 3; ++d) {
        double extent = double(in.dims[d]) * in.spacing[d] / target_spacing;
        // Guard against 4.0000000001 turning into 5 voxels.
        out.dims[d] = std::max(1, int(std::ceil(extent - 1e-9)));
        out.spacing[d] = target_spacing;
        scale[d] = target_spacing / in.spacing[d];
        // Center of output voxel 0 in input index units is 0.5*scale - 0.5.
        out.origin[d] = in.origin[d] + (0.5 * scale[d] - 0.5) * in.spacing[d];
    }

    std::vector<double> data(out.voxel_count());
    const double* src = v.data().data();
    parallel_for(out.dims[2], [&](int k) {
        const double z = (k + 0.5) * scale[2] - 0.5;
        for (int j = 0; j < out.dims[1]; ++j) {
            const double y = (j + 0.5) * scale[1] - 0.5;
            for (int i = 0; i < out.dims[0]; ++i) {
                const double x = (i + 0.5) * scale[0] - 0.5;
                data[out.index(i, j, k)] = sampling::apply(sampling::stencil(in, x, y, z), src);
            }
        }
    });
    if constexpr (std::is_same_v<Tag, LabelTag>) {
        for (double& x : data)
            x = std::clamp(x, 0.0, 1.0);
    }
    return Image<Tag>(out, std::move(data));
}

RoiBox compute_roi(const LabelMask& mask, int margin)
{
    if (margin < 0)
        fail(ErrorCode::InvalidArgument, "ROI margin must be non-negative");
    const GridMeta& g = mask.grid();
    RoiBox box;
    box.lo = {std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
    box.hi = {-1, -1, -1};
    bool any = false;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                if (mask.at(i, j, k) <= 0.5)
                    continue;
                any = true;
                const int p[3] = {i, j, k};
                for (int d = 0; d < 3; ++d) {
                    box.lo[d] = std::min(box.lo[d], p[d]);
                    box.hi[d] = std::max(box.hi[d], p[d]);
                }
            }
    if (!any)
        fail(ErrorCode::EmptyRoi, "mask has no voxels above 0.5");
    for (int d = 0; d < 3; ++d) {
        box.lo[d] = std::max(0, box.lo[d] - margin);
        box.hi[d] = std::min(g.dims[d] - 1, box.hi[d] + margin);
    }
    return box;
}

template <class Tag>
CropResult<Tag> crop_pad(const Image<Tag>& v, const RoiBox& roi, Dims3 out_dims, double pad_value)
{
    const GridMeta& in = v.grid();
    for (int d = 0; d < 3; ++d) {
        if (out_dims[d] <= 0)
            fail(ErrorCode::InvalidArgument, "output dims must be positive");
        if (roi.lo[d] < 0 || roi.hi[d] >= in.dims[d] || roi.lo[d] > roi.hi[d])
            fail(ErrorCode::InvalidArgument, "ROI outside the image grid");
    }
    if constexpr (std::is_same_v<Tag, LabelTag>) {
        if (pad_value < 0.0 || pad_value > 1.0)
            fail(ErrorCode::Domain, "label pad value must lie in [0,1]");
    }

    const Dims3 size = roi.size();
    CropResult<Tag> result;
    // Output voxel o holds input voxel o + shift; the ROI starts at out/2 - size/2.
    Dims3 shift;
    Dims3 keep_lo, keep_hi;
    for (int d = 0; d < 3; ++d) {
        const int offset = out_dims[d] / 2 - size[d] / 2;
        if (offset < 0)
            result.overflow = true;
        shift[d] = roi.lo[d] - offset;
        keep_lo[d] = std::max(roi.lo[d], shift[d]);
        keep_hi[d] = std::min(roi.hi[d], shift[d] + out_dims[d] - 1);
    }

    GridMeta out;
    out.dims = out_dims;
    out.spacing = in.spacing;
    for (int d = 0; d < 3; ++d)
        out.origin[d] = in.origin[d] + double(shift[d]) * in.spacing[d];

    std::vector<double> data(out.voxel_count(), pad_value);
    for (int k = keep_lo[2]; k <= keep_hi[2]; ++k)
        for (int j = keep_lo[1]; j <= keep_hi[1]; ++j)
            for (int i = keep_lo[0]; i <= keep_hi[0]; ++i)
                data[out.index(i - shift[0], j - shift[1], k - shift[2])] = v.at(i, j, k);
    result.image = Image<Tag>(out, std::move(data));
    return result;
}

Volume normalize_minmax(const Volume& v, std::optional<std::pair<double, double>> clip)
{
    double lo, hi;
    if (clip) {
        lo = clip->first;
        hi = clip->second;
        if (!(hi > lo))
            fail(ErrorCode::InvalidArgument, "clip range must satisfy lo < hi");
    } else {
        auto [mn, mx] = std::minmax_element(v.data().begin(), v.data().end());
        lo = *mn;
        hi = *mx;
        if (!(hi > lo))
            fail(ErrorCode::Domain, "cannot normalize a constant volume without a clip range");
    }
    const double inv = 1.0 / (hi - lo);
    std::vector<double> out(v.size());
    for (std::size_t n = 0; n < out.size(); ++n) {
        double x = clip ? std::clamp(v[n], lo, hi) : v[n];
        out[n] = std::clamp((x - lo) * inv, 0.0, 1.0);
    }
    return Volume(v.grid(), std::move(out));
}

template Volume resample_isotropic(const Volume&, double);
template LabelMask resample_isotropic(const LabelMask&, double);
template CropResult<IntensityTag> crop_pad(const Volume&, const RoiBox&, Dims3, double);
template CropResult<LabelTag> crop_pad(const LabelMask&, const RoiBox&, Dims3, double);

} // namespace mplreg
