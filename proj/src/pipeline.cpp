#include "pipeline.hpp"

#include <cmath>

namespace mplreg {

void PreprocessSettings::validate() const
{
    if (!(target_spacing > 0.0) || !std::isfinite(target_spacing))
        fail(ErrorCode::Config, "preprocess.target_spacing must be positive");
    for (int d = 0; d < 3; ++d)
        if (out_dims[d] < 1)
            fail(ErrorCode::Config, "preprocess.out_dims must be positive");
    if (margin < 0)
        fail(ErrorCode::Config, "preprocess.margin must be >= 0");
    for (const auto& c : {fixed_clip, moving_clip})
        if (c && !(c->first < c->second))
            fail(ErrorCode::Config, "clip range needs lo < hi");
}

namespace {

struct Side {
    Volume image;
    LabelMask label;
    bool overflow = false;
    RoiBox roi;
};

Side prepare_side(const Volume& v, const LabelMask& l, const PreprocessSettings& s, double pad,
                  const std::optional<std::pair<double, double>>& clip)
{
    require_compatible(v.grid(), l.grid(), "image and label");
    const Volume r = resample_isotropic(v, s.target_spacing);
    const LabelMask rl = binarize(resample_isotropic(l, s.target_spacing));
    const RoiBox roi = compute_roi(rl, s.margin);
    auto ci = crop_pad(r, roi, s.out_dims, pad);
    auto cl = crop_pad(rl, roi, s.out_dims, 0.0);
    return {normalize_minmax(ci.image, clip), cl.image, ci.overflow, roi};
}

} // namespace

PreparedPair prepare_pair(const Volume& fixed, const LabelMask& fixed_label, const Volume& moving,
                          const LabelMask& moving_label, const PreprocessSettings& settings)
{
    PreparedPair out;
    if (!settings.enabled) {
        out.pair = {moving, fixed, moving_label, fixed_label};
        out.pair.validate();
        return out;
    }
    settings.validate();
    Side f = prepare_side(fixed, fixed_label, settings, settings.fixed_pad, settings.fixed_clip);
    Side m = prepare_side(moving, moving_label, settings, settings.moving_pad, settings.moving_clip);
    const GridMeta& g = f.image.grid();
    out.pair.fixed = std::move(f.image);
    out.pair.fixed_label = std::move(f.label);
    out.pair.moving = Volume(g, m.image.values());
    out.pair.moving_label = LabelMask(g, m.label.values());
    out.fixed_overflow = f.overflow;
    out.moving_overflow = m.overflow;
    out.moving_roi = m.roi;
    return out;
}

Volume prepare_companion(const Volume& companion, const Volume& raw_moving, const PreparedPair& prepared,
                         const PreprocessSettings& settings)
{
    require_compatible(companion.grid(), raw_moving.grid(), "companion and moving image");
    if (!settings.enabled || !prepared.moving_roi)
        return companion;
    const Volume r = resample_isotropic(companion, settings.target_spacing);
    auto c = crop_pad(r, *prepared.moving_roi, settings.out_dims, 0.0);
    return Volume(prepared.pair.fixed.grid(), c.image.values());
}

} // namespace mplreg
