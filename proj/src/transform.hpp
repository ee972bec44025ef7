#pragma once

#include "image.hpp"
#include "parallel.hpp"
#include "sampling.hpp"

#include <filesystem>

namespace mplreg {

/// 3x4 matrix [A|t] acting on voxel indices of the fixed grid, row-major.
struct AffineParams {
    std::array<double, 12> values{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};

    static AffineParams identity() { return {}; }

    double linear(int r, int c) const { return values[std::size_t(4 * r + c)]; }
    double translation(int r) const { return values[std::size_t(4 * r + 3)]; }

    Vec3 apply(const Vec3& x) const
    {
        Vec3 y;
        for (int r = 0; r < 3; ++r)
            y[r] = linear(r, 0) * x[0] + linear(r, 1) * x[1] + linear(r, 2) * x[2] + translation(r);
        return y;
    }

    double determinant() const;
    bool finite() const;
};

/// Dense displacement u on a grid, in voxel units: voxel x samples x + u(x).
/// Components are stored as three planes.
class DisplacementField {
public:
    DisplacementField() = default;
    explicit DisplacementField(const GridMeta& grid);
    DisplacementField(const GridMeta& grid, std::array<std::vector<double>, 3> components);

    const GridMeta& grid() const noexcept { return grid_; }
    std::size_t voxel_count() const noexcept { return grid_.voxel_count(); }

    std::span<const double> component(int c) const noexcept { return comp_[std::size_t(c)]; }
    std::span<double> component(int c) noexcept { return comp_[std::size_t(c)]; }

    Vec3 at(std::size_t n) const noexcept { return {comp_[0][n], comp_[1][n], comp_[2][n]}; }
    void set(std::size_t n, const Vec3& u) noexcept
    {
        comp_[0][n] = u[0];
        comp_[1][n] = u[1];
        comp_[2][n] = u[2];
    }

    /// Throws Domain if any component is NaN/Inf.
    void check_finite() const;

    /// Flat view in component-major order (all x, then y, then z).
    std::vector<double> flatten() const;
    static DisplacementField from_flat(const GridMeta& grid, std::span<const double> flat);

private:
    GridMeta grid_;
    std::array<std::vector<double>, 3> comp_;
};

DisplacementField affine_to_field(const AffineParams& a, const GridMeta& grid);

/// out(x) = v(x + u(x)), trilinear, clamp-to-edge.
template <class Tag>
Image<Tag> warp(const Image<Tag>& v, const DisplacementField& phi)
{
    require_compatible(v.grid(), phi.grid(), "warp");
    const GridMeta& g = v.grid();
    std::vector<double> out(g.voxel_count());
    const double* src = v.data().data();
    auto ux = phi.component(0), uy = phi.component(1), uz = phi.component(2);
    parallel_for(g.dims[2], [&](int k) {
        for (int j = 0; j < g.dims[1]; ++j) {
            std::size_t n = g.index(0, j, k);
            for (int i = 0; i < g.dims[0]; ++i, ++n) {
                auto s = sampling::stencil(g, i + ux[n], j + uy[n], k + uz[n]);
                out[n] = sampling::apply(s, src);
            }
        }
    });
    if constexpr (std::is_same_v<Tag, LabelTag>) {
        // Trilinear weights are convex; clamp away rounding excursions.
        for (double& x : out)
            x = std::clamp(x, 0.0, 1.0);
    }
    return Image<Tag>(g, std::move(out));
}

/// Warped values plus the derivative of each warped value with respect to
/// the displacement at that voxel (the image gradient at the sample point).
struct WarpWithGradient {
    std::vector<double> values;
    std::array<std::vector<double>, 3> gradient;
};

template <class Tag>
WarpWithGradient warp_with_gradient(const Image<Tag>& v, const DisplacementField& phi)
{
    require_compatible(v.grid(), phi.grid(), "warp");
    const GridMeta& g = v.grid();
    const std::size_t count = g.voxel_count();
    WarpWithGradient out;
    out.values.resize(count);
    for (auto& c : out.gradient)
        c.resize(count);
    const double* src = v.data().data();
    auto ux = phi.component(0), uy = phi.component(1), uz = phi.component(2);
    parallel_for(g.dims[2], [&](int k) {
        for (int j = 0; j < g.dims[1]; ++j) {
            std::size_t n = g.index(0, j, k);
            for (int i = 0; i < g.dims[0]; ++i, ++n) {
                auto s = sampling::stencil(g, i + ux[n], j + uy[n], k + uz[n]);
                out.values[n] = sampling::apply(s, src);
                double d[3];
                sampling::gradient(s, src, d);
                out.gradient[0][n] = d[0];
                out.gradient[1][n] = d[1];
                out.gradient[2][n] = d[2];
            }
        }
    });
    return out;
}

/// Recursive composition: out(x) = prev(x + inc(x)) + inc(x).
DisplacementField compose(const DisplacementField& prev, const DisplacementField& inc);

/// Chain rule through affine_to_field: given dL/du per voxel, returns
/// dL/d(values) for the 12 entries of [A|t].
std::array<double, 12> affine_gradient(const DisplacementField& dl_du);

/// Chain rule through compose(prev, inc) with prev held fixed: given dL/d(out),
/// returns dL/d(inc) = g + (grad prev)(x + inc(x))^T g.
DisplacementField compose_gradient(const DisplacementField& prev, const DisplacementField& inc,
                                   const DisplacementField& dl_dout);

/// Central differences in the interior, one-sided on the boundary, voxel units.
template <class Tag>
std::array<ScalarField, 3> spatial_gradient(const Image<Tag>& v);

void spatial_gradient(const GridMeta& g, std::span<const double> v, std::array<std::vector<double>, 3>& out);

/// det(I + grad u) per voxel.
ScalarField jacobian_determinant(const DisplacementField& phi);

double fraction_negative_jacobian(const DisplacementField& phi);

/// sqrt(mean |u|^2) in voxels.
double field_rms(const DisplacementField& phi);
double field_max_norm(const DisplacementField& phi);

/// 4-D float32 NIfTI (dims x 3, vector intent) plus a JSON sidecar at
/// path + ".json" describing grid and units. Little-endian.
void write_field(const DisplacementField& phi, const std::filesystem::path& path);
DisplacementField read_field(const std::filesystem::path& path);

template <class Tag>
std::array<ScalarField, 3> spatial_gradient(const Image<Tag>& v)
{
    std::array<std::vector<double>, 3> d;
    spatial_gradient(v.grid(), v.data(), d);
    return {ScalarField(v.grid(), std::move(d[0])), ScalarField(v.grid(), std::move(d[1])),
            ScalarField(v.grid(), std::move(d[2]))};
}

} // namespace mplreg
