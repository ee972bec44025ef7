#pragma once

#include "image.hpp"

#include <algorithm>
#include <cmath>

namespace mplreg::sampling {

// Trilinear interpolation with clamp-to-edge. Continuous coordinates are in
// voxel index units; a point outside [0, n-1] along an axis takes the edge
// value and has zero derivative along that axis.

struct AxisCell {
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    double f = 0.0;
    bool varying = false;
};

inline AxisCell axis_cell(double p, int n) noexcept
{
    if (n == 1)
        return {};
    double hi = double(n - 1);
    AxisCell c;
    c.varying = p >= 0.0 && p <= hi;
    // NaN lands on the first voxel rather than in an int conversion.
    double q = p > 0.0 ? std::min(p, hi) : 0.0;
    int i0 = std::min(int(q), n - 2);
    c.i0 = std::size_t(i0);
    c.i1 = std::size_t(i0 + 1);
    c.f = q - double(i0);
    return c;
}

struct Stencil {
    std::size_t idx[8];
    AxisCell cx, cy, cz;
};

inline Stencil stencil(const GridMeta& g, double x, double y, double z) noexcept
{
    Stencil s;
    s.cx = axis_cell(x, g.dims[0]);
    s.cy = axis_cell(y, g.dims[1]);
    s.cz = axis_cell(z, g.dims[2]);
    const std::size_t sy = std::size_t(g.dims[0]);
    const std::size_t sz = sy * std::size_t(g.dims[1]);
    int n = 0;
    for (int c = 0; c < 2; ++c) {
        std::size_t kz = (c ? s.cz.i1 : s.cz.i0) * sz;
        for (int b = 0; b < 2; ++b) {
            std::size_t ky = (b ? s.cy.i1 : s.cy.i0) * sy;
            for (int a = 0; a < 2; ++a)
                s.idx[n++] = (a ? s.cx.i1 : s.cx.i0) + ky + kz;
        }
    }
    return s;
}

/// Exact at f = 0, f = 1 and for a == b.
inline double lerp(double a, double b, double f) noexcept
{
    return f <= 0.5 ? a + f * (b - a) : b - (1.0 - f) * (b - a);
}

/// Nested lerps rather than the weighted sum, so constants and grid points
/// come back exactly.
inline double apply(const Stencil& s, const double* data) noexcept
{
    const double fx = s.cx.f, fy = s.cy.f, fz = s.cz.f;
    double v[8];
    for (int n = 0; n < 8; ++n)
        v[n] = data[s.idx[n]];
    const double c0 = lerp(lerp(v[0], v[1], fx), lerp(v[2], v[3], fx), fy);
    const double c1 = lerp(lerp(v[4], v[5], fx), lerp(v[6], v[7], fx), fy);
    return lerp(c0, c1, fz);
}

/// Derivative of the interpolant with respect to the sample coordinate.
inline void gradient(const Stencil& s, const double* data, double out[3]) noexcept
{
    const double fx = s.cx.f, fy = s.cy.f, fz = s.cz.f;
    double v[8];
    for (int n = 0; n < 8; ++n)
        v[n] = data[s.idx[n]];
    // corners ordered (x fastest): 000 100 010 110 001 101 011 111
    double dx = 0.0, dy = 0.0, dz = 0.0;
    if (s.cx.varying) {
        dx = (1 - fy) * (1 - fz) * (v[1] - v[0]) + fy * (1 - fz) * (v[3] - v[2])
           + (1 - fy) * fz * (v[5] - v[4]) + fy * fz * (v[7] - v[6]);
    }
    if (s.cy.varying) {
        dy = (1 - fx) * (1 - fz) * (v[2] - v[0]) + fx * (1 - fz) * (v[3] - v[1])
           + (1 - fx) * fz * (v[6] - v[4]) + fx * fz * (v[7] - v[5]);
    }
    if (s.cz.varying) {
        dz = (1 - fx) * (1 - fy) * (v[4] - v[0]) + fx * (1 - fy) * (v[5] - v[1])
           + (1 - fx) * fy * (v[6] - v[2]) + fx * fy * (v[7] - v[3]);
    }
    out[0] = dx;
    out[1] = dy;
    out[2] = dz;
}

template <class Tag>
double sample(const Image<Tag>& img, double x, double y, double z) noexcept
{
    return apply(stencil(img.grid(), x, y, z), img.data().data());
}

} // namespace mplreg::sampling
