#include "transform.hpp"

#include <json.hpp>

#include "nifti.hpp"

#include <fstream>

namespace mplreg {

namespace {

constexpr std::int16_t kIntentVector = 1007;

} // namespace

double AffineParams::determinant() const
{
    const double a = linear(0, 0), b = linear(0, 1), c = linear(0, 2);
    const double d = linear(1, 0), e = linear(1, 1), f = linear(1, 2);
    const double g = linear(2, 0), h = linear(2, 1), i = linear(2, 2);
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
}

bool AffineParams::finite() const
{
    for (double v : values)
        if (!std::isfinite(v))
            return false;
    return true;
}

DisplacementField::DisplacementField(const GridMeta& grid)
    : grid_(grid)
{
    grid_.validate();
    for (auto& c : comp_)
        c.assign(grid_.voxel_count(), 0.0);
}

DisplacementField::DisplacementField(const GridMeta& grid, std::array<std::vector<double>, 3> components)
    : grid_(grid), comp_(std::move(components))
{
    grid_.validate();
    for (const auto& c : comp_)
        if (c.size() != grid_.voxel_count())
            fail(ErrorCode::InvalidArgument, "displacement component length does not match grid");
    check_finite();
}

void DisplacementField::check_finite() const
{
    for (const auto& c : comp_)
        for (double v : c)
            if (!std::isfinite(v))
                fail(ErrorCode::Domain, "displacement field contains a non-finite value");
}

std::vector<double> DisplacementField::flatten() const
{
    std::vector<double> flat;
    flat.reserve(3 * voxel_count());
    for (const auto& c : comp_)
        flat.insert(flat.end(), c.begin(), c.end());
    return flat;
}

DisplacementField DisplacementField::from_flat(const GridMeta& grid, std::span<const double> flat)
{
    const std::size_t n = grid.voxel_count();
    if (flat.size() != 3 * n)
        fail(ErrorCode::InvalidArgument, "flat field length must be 3 * voxel count");
    std::array<std::vector<double>, 3> comps;
    for (int c = 0; c < 3; ++c)
        comps[std::size_t(c)].assign(flat.begin() + std::ptrdiff_t(c * n), flat.begin() + std::ptrdiff_t((c + 1) * n));
    return DisplacementField(grid, std::move(comps));
}

DisplacementField affine_to_field(const AffineParams& a, const GridMeta& grid)
{
    DisplacementField out(grid);
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i) {
                Vec3 x{double(i), double(j), double(k)};
                Vec3 y = a.apply(x);
                out.set(grid.index(i, j, k), {y[0] - x[0], y[1] - x[1], y[2] - x[2]});
            }
    return out;
}

DisplacementField compose(const DisplacementField& prev, const DisplacementField& inc)
{
    require_compatible(prev.grid(), inc.grid(), "compose");
    const GridMeta& g = prev.grid();
    DisplacementField out(g);
    const double* p[3] = {prev.component(0).data(), prev.component(1).data(), prev.component(2).data()};
    auto ix = inc.component(0), iy = inc.component(1), iz = inc.component(2);
    auto ox = out.component(0), oy = out.component(1), oz = out.component(2);
    parallel_for(g.dims[2], [&](int k) {
        for (int j = 0; j < g.dims[1]; ++j) {
            std::size_t n = g.index(0, j, k);
            for (int i = 0; i < g.dims[0]; ++i, ++n) {
                auto s = sampling::stencil(g, i + ix[n], j + iy[n], k + iz[n]);
                ox[n] = sampling::apply(s, p[0]) + ix[n];
                oy[n] = sampling::apply(s, p[1]) + iy[n];
                oz[n] = sampling::apply(s, p[2]) + iz[n];
            }
        }
    });
    return out;
}

std::array<double, 12> affine_gradient(const DisplacementField& dl_du)
{
    const GridMeta& g = dl_du.grid();
    // Per-slice partial sums keep the reduction order fixed.
    std::vector<std::array<double, 12>> partial(std::size_t(g.dims[2]));
    parallel_for(g.dims[2], [&](int k) {
        std::array<double, 12> acc{};
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const std::size_t n = g.index(i, j, k);
                const double x[3] = {double(i), double(j), double(k)};
                for (int r = 0; r < 3; ++r) {
                    const double gr = dl_du.component(r)[n];
                    acc[std::size_t(4 * r + 0)] += gr * x[0];
                    acc[std::size_t(4 * r + 1)] += gr * x[1];
                    acc[std::size_t(4 * r + 2)] += gr * x[2];
                    acc[std::size_t(4 * r + 3)] += gr;
                }
            }
        partial[std::size_t(k)] = acc;
    });
    std::array<double, 12> out{};
    for (const auto& p : partial)
        for (std::size_t e = 0; e < 12; ++e)
            out[e] += p[e];
    return out;
}

DisplacementField compose_gradient(const DisplacementField& prev, const DisplacementField& inc,
                                   const DisplacementField& dl_dout)
{
    require_compatible(prev.grid(), inc.grid(), "compose_gradient");
    require_compatible(prev.grid(), dl_dout.grid(), "compose_gradient");
    const GridMeta& g = prev.grid();
    DisplacementField out(g);
    const double* p[3] = {prev.component(0).data(), prev.component(1).data(), prev.component(2).data()};
    parallel_for(g.dims[2], [&](int k) {
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const std::size_t n = g.index(i, j, k);
                const Vec3 d = inc.at(n);
                const Vec3 go = dl_dout.at(n);
                auto s = sampling::stencil(g, i + d[0], j + d[1], k + d[2]);
                Vec3 gi = go;
                for (int c = 0; c < 3; ++c) {
                    double dp[3];
                    sampling::gradient(s, p[c], dp);
                    for (int e = 0; e < 3; ++e)
                        gi[std::size_t(e)] += go[std::size_t(c)] * dp[e];
                }
                out.set(n, gi);
            }
    });
    return out;
}

void spatial_gradient(const GridMeta& g, std::span<const double> v, std::array<std::vector<double>, 3>& out)
{
    const std::size_t count = g.voxel_count();
    for (auto& c : out)
        c.assign(count, 0.0);
    const std::size_t stride[3] = {1, std::size_t(g.dims[0]), std::size_t(g.dims[0]) * std::size_t(g.dims[1])};
    parallel_for(g.dims[2], [&](int k) {
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const std::size_t n = g.index(i, j, k);
                const int pos[3] = {i, j, k};
                for (int d = 0; d < 3; ++d) {
                    const int len = g.dims[d];
                    if (len < 2)
                        continue;
                    const std::size_t s = stride[d];
                    double val;
                    if (pos[d] == 0)
                        val = v[n + s] - v[n];
                    else if (pos[d] == len - 1)
                        val = v[n] - v[n - s];
                    else
                        val = 0.5 * (v[n + s] - v[n - s]);
                    out[std::size_t(d)][n] = val;
                }
            }
    });
}

ScalarField jacobian_determinant(const DisplacementField& phi)
{
    const GridMeta& g = phi.grid();
    std::array<std::array<std::vector<double>, 3>, 3> du; // du[c][d] = d u_c / d x_d
    for (int c = 0; c < 3; ++c)
        spatial_gradient(g, phi.component(c), du[std::size_t(c)]);
    std::vector<double> det(g.voxel_count());
    for (std::size_t n = 0; n < det.size(); ++n) {
        const double a = 1.0 + du[0][0][n], b = du[0][1][n], c = du[0][2][n];
        const double d = du[1][0][n], e = 1.0 + du[1][1][n], f = du[1][2][n];
        const double gg = du[2][0][n], h = du[2][1][n], i = 1.0 + du[2][2][n];
        det[n] = a * (e * i - f * h) - b * (d * i - f * gg) + c * (d * h - e * gg);
    }
    return ScalarField(g, std::move(det));
}

double fraction_negative_jacobian(const DisplacementField& phi)
{
    auto det = jacobian_determinant(phi);
    std::size_t negative = 0;
    for (double v : det.data())
        if (v < 0.0)
            ++negative;
    return double(negative) / double(det.size());
}

double field_rms(const DisplacementField& phi)
{
    double sum = 0.0;
    for (int c = 0; c < 3; ++c)
        for (double v : phi.component(c))
            sum += v * v;
    return std::sqrt(sum / double(phi.voxel_count()));
}

double field_max_norm(const DisplacementField& phi)
{
    double best = 0.0;
    for (std::size_t n = 0; n < phi.voxel_count(); ++n) {
        Vec3 u = phi.at(n);
        best = std::max(best, std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]));
    }
    return best;
}

void write_field(const DisplacementField& phi, const std::filesystem::path& path)
{
    auto flat = phi.flatten();
    nifti::write(path, phi.grid(), flat, 3, kIntentVector);

    const GridMeta& g = phi.grid();
    nlohmann::json side = {
        {"dims", g.dims},
        {"spacing", g.spacing},
        {"origin", g.origin},
        {"components", 3},
        {"units", "voxel"},
        {"layout", "component-major float32, x fastest, little-endian"},
    };
    std::ofstream out(path.string() + ".json");
    if (!out)
        fail(ErrorCode::Io, "cannot write field sidecar for " + path.string());
    out << side.dump(2) << '\n';
}

DisplacementField read_field(const std::filesystem::path& path)
{
    auto raw = nifti::read(path);
    if (raw.components != 3)
        fail(ErrorCode::Format, "displacement file must have 3 components: " + path.string());
    std::filesystem::path side = path.string() + ".json";
    if (std::filesystem::exists(side)) {
        std::ifstream in(side);
        nlohmann::json meta;
        try {
            meta = nlohmann::json::parse(in);
            raw.grid.dims = meta.at("dims").get<Dims3>();
            raw.grid.spacing = meta.at("spacing").get<Vec3>();
            raw.grid.origin = meta.at("origin").get<Vec3>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::Format, "bad field sidecar " + side.string() + ": " + e.what());
        }
        if (raw.grid.voxel_count() * 3 != raw.data.size())
            fail(ErrorCode::Format, "field sidecar dims disagree with payload: " + side.string());
    }
    return DisplacementField::from_flat(raw.grid, raw.data);
}

} // namespace mplreg
