#include "losses.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <numeric>

namespace mplreg {

// ---------------------------------------------------------------------------
// Gaussian scale space

GaussianKernel GaussianKernel::make(double sigma)
{
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        fail(ErrorCode::InvalidArgument, "gaussian sigma must be finite and non-negative");
    GaussianKernel k;
    k.sigma = sigma;
    if (sigma == 0.0)
        return k;
    k.radius = int(std::ceil(3.0 * sigma));
    k.weights.assign(std::size_t(2 * k.radius + 1), 0.0);
    double sum = 0.0;
    for (int i = -k.radius; i <= k.radius; ++i) {
        double w = std::exp(-double(i) * double(i) / (2.0 * sigma * sigma));
        k.weights[std::size_t(i + k.radius)] = w;
        sum += w;
    }
    for (double& w : k.weights)
        w /= sum;
    return k;
}

namespace {

// 1-D filtering along one axis. Row j of the matrix reads
// src[begin[j] .. begin[j+1]) with matching weights; clamped taps that land
// on the same source are merged. The same matrix is also kept by column for
// the contiguous x pass.
struct AxisTaps {
    std::vector<int> begin;
    std::vector<int> src;
    std::vector<double> w;
    std::vector<int> col_lo;
    std::vector<int> col_begin;
    std::vector<double> col_w;
};

// Dense n x n matrix of the 1-D clamped filter; fine since n is a grid dimension.
std::vector<double> axis_matrix(int n, const GaussianKernel& k, bool adjoint)
{
    std::vector<double> m(std::size_t(n) * std::size_t(n), 0.0);
    for (int j = 0; j < n; ++j)
        for (int q = -k.radius; q <= k.radius; ++q) {
            int s = std::clamp(j + q, 0, n - 1);
            double w = k.weights[std::size_t(q + k.radius)];
            if (adjoint)
                m[std::size_t(s) * std::size_t(n) + std::size_t(j)] += w;
            else
                m[std::size_t(j) * std::size_t(n) + std::size_t(s)] += w;
        }
    return m;
}

AxisTaps taps_from_matrix(int n, const std::vector<double>& m)
{
    auto at = [&](int r, int c) { return m[std::size_t(r) * std::size_t(n) + std::size_t(c)]; };
    AxisTaps t;
    t.begin.reserve(std::size_t(n) + 1);
    for (int j = 0; j < n; ++j) {
        t.begin.push_back(int(t.src.size()));
        for (int s = 0; s < n; ++s)
            if (at(j, s) != 0.0) {
                t.src.push_back(s);
                t.w.push_back(at(j, s));
            }
    }
    t.begin.push_back(int(t.src.size()));
    for (int s = 0; s < n; ++s) {
        int lo = n, hi = -1;
        for (int j = 0; j < n; ++j)
            if (at(j, s) != 0.0) {
                lo = std::min(lo, j);
                hi = std::max(hi, j);
            }
        t.col_begin.push_back(int(t.col_w.size()));
        t.col_lo.push_back(lo);
        for (int j = lo; j <= hi; ++j)
            t.col_w.push_back(at(j, s));
    }
    t.col_begin.push_back(int(t.col_w.size()));
    return t;
}

AxisTaps build_taps(int n, const GaussianKernel& k, bool adjoint)
{
    return taps_from_matrix(n, axis_matrix(n, k, adjoint));
}

void filter_axis(const GridMeta& g, const double* in, double* out, const AxisTaps& t, int axis)
{
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    const std::size_t plane = std::size_t(nx) * std::size_t(ny);
    if (axis == 0) {
        parallel_for(nz, [&](int k) {
            for (int j = 0; j < ny; ++j) {
                const double* row = in + g.index(0, j, k);
                double* dst = out + g.index(0, j, k);
                std::fill(dst, dst + nx, 0.0);
                for (int s = 0; s < nx; ++s) {
                    const double v = row[s];
                    const double* w = t.col_w.data() + t.col_begin[std::size_t(s)];
                    const int len = t.col_begin[std::size_t(s) + 1] - t.col_begin[std::size_t(s)];
                    double* d = dst + t.col_lo[std::size_t(s)];
                    for (int e = 0; e < len; ++e)
                        d[e] += w[e] * v;
                }
            }
        });
    } else if (axis == 1) {
        parallel_for(nz, [&](int k) {
            for (int j = 0; j < ny; ++j) {
                double* dst = out + g.index(0, j, k);
                std::fill(dst, dst + nx, 0.0);
                for (int e = t.begin[std::size_t(j)]; e < t.begin[std::size_t(j) + 1]; ++e) {
                    const double w = t.w[std::size_t(e)];
                    const double* row = in + g.index(0, t.src[std::size_t(e)], k);
                    for (int i = 0; i < nx; ++i)
                        dst[i] += w * row[i];
                }
            }
        });
    } else {
        // Tiles of the plane keep the source slabs cache resident.
        const std::size_t tile = 512;
        const int tiles = int((plane + tile - 1) / tile);
        parallel_for(tiles, [&](int b) {
            const std::size_t lo = std::size_t(b) * tile;
            const std::size_t len = std::min(tile, plane - lo);
            for (int k = 0; k < nz; ++k) {
                double* dst = out + std::size_t(k) * plane + lo;
                std::fill(dst, dst + len, 0.0);
                for (int e = t.begin[std::size_t(k)]; e < t.begin[std::size_t(k) + 1]; ++e) {
                    const double w = t.w[std::size_t(e)];
                    const double* src = in + std::size_t(t.src[std::size_t(e)]) * plane + lo;
                    for (std::size_t n = 0; n < len; ++n)
                        dst[n] += w * src[n];
                }
            }
        });
    }
}

void separable(const GridMeta& g, std::span<const double> in, std::span<double> out,
               const std::array<AxisTaps, 3>& taps)
{
    if (in.size() != g.voxel_count() || out.size() != g.voxel_count())
        fail(ErrorCode::InvalidArgument, "filter buffers do not match grid");
    std::vector<double> tmp(g.voxel_count());
    const double* src = in.data();
    double* bufs[2] = {tmp.data(), out.data()};
    // Ping-pong so the last of the three passes lands in out.
    int which = 1;
    for (int axis = 0; axis < 3; ++axis) {
        double* dst = bufs[which];
        filter_axis(g, src, dst, taps[std::size_t(axis)], axis);
        src = dst;
        which ^= 1;
    }
}

void separable(const GridMeta& g, std::span<const double> in, std::span<double> out, const GaussianKernel& k,
               bool adjoint)
{
    if (in.size() != g.voxel_count() || out.size() != g.voxel_count())
        fail(ErrorCode::InvalidArgument, "filter buffers do not match grid");
    if (k.radius == 0) {
        std::copy(in.begin(), in.end(), out.begin());
        return;
    }
    separable(g, in, out,
              {build_taps(g.dims[0], k, adjoint), build_taps(g.dims[1], k, adjoint),
               build_taps(g.dims[2], k, adjoint)});
}

} // namespace

void gaussian_filter(const GridMeta& g, std::span<const double> in, std::span<double> out, const GaussianKernel& k)
{
    separable(g, in, out, k, false);
}

void gaussian_filter_adjoint(const GridMeta& g, std::span<const double> in, std::span<double> out,
                             const GaussianKernel& k)
{
    separable(g, in, out, k, true);
}

// ---------------------------------------------------------------------------
// Mutual information

ParzenBinner::ParzenBinner(const HistogramSettings& s)
    : bins_(s.bins), sigma_(s.parzen_sigma)
{
    if (bins_ < 2)
        fail(ErrorCode::Config, "histogram needs at least 2 bins");
    if (!(sigma_ >= 0.0) || !std::isfinite(sigma_))
        fail(ErrorCode::Config, "parzen sigma must be finite and non-negative");
    width_ = sigma_ > 0.0 ? std::min(bins_, 2 * int(std::ceil(3.0 * sigma_)) + 1) : 1;
    tail_ = std::exp(-4.5);
    step_ratio_ = sigma_ > 0.0 ? std::exp(-1.0 / (sigma_ * sigma_)) : 0.0;
}

int ParzenBinner::weights(double v, double* w, double* dw) const noexcept
{
    const double scale = double(bins_ - 1);
    const bool inside = v > 0.0 && v < 1.0;
    const double c = std::clamp(v, 0.0, 1.0) * scale;
    auto nearest = [&] {
        int b = std::clamp(int(std::lround(c)), 0, bins_ - 1);
        for (int s = 0; s < width_; ++s) {
            w[s] = 0.0;
            if (dw)
                dw[s] = 0.0;
        }
        int first = std::min(b, bins_ - width_);
        w[b - first] = 1.0;
        return first;
    };
    if (sigma_ == 0.0)
        return nearest();

    const double reach = 3.0 * sigma_;
    const double inv_var = 1.0 / (sigma_ * sigma_);
    const int lo = std::max(0, int(std::ceil(c - reach)));
    const int first = std::min(lo, bins_ - width_);
    double sum = 0.0, dsum = 0.0;
    // exp(-d^2/2s^2) over consecutive bins by recurrence on the ratio.
    const double d0 = double(first) - c;
    double h = std::exp(-0.5 * d0 * d0 * inv_var);
    double ratio = std::exp(-0.5 * inv_var * (2.0 * d0 + 1.0));
    for (int s = 0; s < width_; ++s) {
        const double d = double(first + s) - c;
        double g = 0.0, dg = 0.0;
        if (std::abs(d) < reach) {
            // Gaussian minus its second-order expansion in u = d^2/s^2 about
            // the truncation radius, so value, slope and curvature vanish
            // there and the window is C2 in c.
            const double w = d * d * inv_var - 9.0;
            g = h - tail_ * (1.0 - 0.5 * w + 0.125 * w * w);
            dg = d * inv_var * (h - tail_ * (1.0 - 0.5 * w)); // d g / d c
        }
        h *= ratio;
        ratio *= step_ratio_;
        w[s] = g;
        if (dw)
            dw[s] = dg;
        sum += g;
        dsum += dg;
    }
    if (!(sum > 0.0))
        return nearest();
    const double inv = 1.0 / sum;
    for (int s = 0; s < width_; ++s) {
        w[s] *= inv;
        if (dw)
            dw[s] = inside ? (dw[s] - w[s] * dsum) * inv * scale : 0.0;
    }
    return first;
}

void check_normalized(std::span<const double> v, const char* what)
{
    for (double x : v)
        if (!(x >= -1e-9 && x <= 1.0 + 1e-9))
            fail(ErrorCode::Domain, std::string(what) + ": intensities must be normalized to [0,1]");
}

namespace {

// Per-voxel Parzen placements for one image, kept for the gradient pass.
struct Placements {
    int width = 0;
    std::vector<int> first;
    std::vector<double> w;
    std::vector<double> dw;
};

Placements place(const ParzenBinner& binner, std::span<const double> v, bool with_derivative)
{
    Placements p;
    p.width = binner.width();
    const std::size_t count = v.size();
    p.first.resize(count);
    p.w.resize(count * std::size_t(p.width));
    if (with_derivative)
        p.dw.resize(count * std::size_t(p.width));
    const std::size_t chunk = 4096;
    const int chunks = int((count + chunk - 1) / chunk);
    parallel_for(chunks, [&](int c) {
        const std::size_t end = std::min(count, std::size_t(c + 1) * chunk);
        for (std::size_t n = std::size_t(c) * chunk; n < end; ++n) {
            double* w = p.w.data() + n * std::size_t(p.width);
            double* dw = with_derivative ? p.dw.data() + n * std::size_t(p.width) : nullptr;
            p.first[n] = binner.weights(v[n], w, dw);
        }
    });
    return p;
}

struct PlacementView {
    int width = 0;
    std::span<const int> first;
    std::span<const double> w;
    std::span<const double> dw;
};

PlacementView view(const Placements& p)
{
    return {p.width, p.first, p.w, p.dw};
}

std::vector<double> mask_weights(const LabelMask* mask)
{
    return mask ? mask->values() : std::vector<double>{};
}

JointHistogram accumulate(const PlacementView& pm, const PlacementView& pf, std::span<const double> omega, int bins,
                          double sigma)
{
    const std::size_t count = pm.first.size();
    const std::size_t B = std::size_t(bins);
    const int wm = pm.width, wf = pf.width;
    const std::size_t chunk = 4096;
    const int chunks = int((count + chunk - 1) / chunk);
    std::vector<std::vector<double>> partial(static_cast<std::size_t>(chunks));
    std::vector<double> mass(std::size_t(chunks), 0.0);
    parallel_for(chunks, [&](int c) {
        auto& h = partial[std::size_t(c)];
        h.assign(B * B, 0.0);
        double total = 0.0;
        const std::size_t end = std::min(count, std::size_t(c + 1) * chunk);
        for (std::size_t n = std::size_t(c) * chunk; n < end; ++n) {
            const double weight = omega.empty() ? 1.0 : omega[n];
            if (weight == 0.0)
                continue;
            total += weight;
            const double* a = pm.w.data() + n * std::size_t(wm);
            const double* b = pf.w.data() + n * std::size_t(wf);
            double* row = h.data() + std::size_t(pm.first[n]) * B + std::size_t(pf.first[n]);
            for (int s = 0; s < wm; ++s) {
                const double as = weight * a[s];
                if (as == 0.0)
                    continue;
                double* r = row + std::size_t(s) * B;
                for (int t = 0; t < wf; ++t)
                    r[t] += as * b[t];
            }
        }
        mass[std::size_t(c)] = total;
    });

    JointHistogram h;
    h.bins = bins;
    h.parzen_sigma = sigma;
    h.joint.assign(B * B, 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < partial.size(); ++c) {
        for (std::size_t e = 0; e < B * B; ++e)
            h.joint[e] += partial[c][e];
        total += mass[c];
    }
    if (!(total > 0.0))
        fail(ErrorCode::Domain, "joint histogram has zero total weight (empty mask?)");
    for (double& x : h.joint)
        x /= total;
    h.marginal_m.assign(B, 0.0);
    h.marginal_f.assign(B, 0.0);
    for (std::size_t a = 0; a < B; ++a)
        for (std::size_t b = 0; b < B; ++b) {
            h.marginal_m[a] += h.joint[a * B + b];
            h.marginal_f[b] += h.joint[a * B + b];
        }
    return h;
}

double histogram_total_mass(const PlacementView& p, std::span<const double> omega)
{
    if (omega.empty())
        return double(p.first.size());
    double total = 0.0;
    for (double x : omega)
        total += x;
    return total;
}

// T(a,b) = log pm(a) + log pf(b) - log p(a,b); dMI/dp(a,b) up to a constant.
std::vector<double> mi_sensitivity(const JointHistogram& h)
{
    const std::size_t B = std::size_t(h.bins);
    std::vector<double> t(B * B, 0.0);
    for (std::size_t a = 0; a < B; ++a)
        for (std::size_t b = 0; b < B; ++b) {
            const double p = h.joint[a * B + b];
            if (p > 0.0)
                t[a * B + b] = std::log(h.marginal_m[a]) + std::log(h.marginal_f[b]) - std::log(p);
        }
    return t;
}

void mi_gradient(const PlacementView& pm, const PlacementView& pf, std::span<const double> omega, const JointHistogram& h,
                 std::span<double> out)
{
    const std::vector<double> t = mi_sensitivity(h);
    const double inv_mass = 1.0 / histogram_total_mass(pm, omega);
    const std::size_t B = std::size_t(h.bins);
    const int wm = pm.width, wf = pf.width;
    const std::size_t count = pm.first.size();
    const std::size_t chunk = 4096;
    const int chunks = int((count + chunk - 1) / chunk);
    parallel_for(chunks, [&](int c) {
        const std::size_t end = std::min(count, std::size_t(c + 1) * chunk);
        for (std::size_t n = std::size_t(c) * chunk; n < end; ++n) {
            const double weight = omega.empty() ? 1.0 : omega[n];
            double g = 0.0;
            if (weight != 0.0) {
                const double* da = pm.dw.data() + n * std::size_t(wm);
                const double* b = pf.w.data() + n * std::size_t(wf);
                const double* row = t.data() + std::size_t(pm.first[n]) * B + std::size_t(pf.first[n]);
                for (int s = 0; s < wm; ++s) {
                    if (da[s] == 0.0)
                        continue;
                    const double* r = row + std::size_t(s) * B;
                    double inner = 0.0;
                    for (int u = 0; u < wf; ++u)
                        inner += b[u] * r[u];
                    g += da[s] * inner;
                }
                g *= weight * inv_mass;
            }
            out[n] = g;
        }
    });
}

} // namespace

double mutual_information_loss(const JointHistogram& h)
{
    const std::size_t B = std::size_t(h.bins);
    double mi = 0.0;
    for (std::size_t a = 0; a < B; ++a)
        for (std::size_t b = 0; b < B; ++b) {
            const double p = h.joint[a * B + b];
            if (p > 0.0)
                mi += p * std::log(p / (h.marginal_m[a] * h.marginal_f[b]));
        }
    return -mi;
}

JointHistogram joint_histogram(const Volume& m, const Volume& f, const HistogramSettings& s, const LabelMask* mask)
{
    require_compatible(m.grid(), f.grid(), "joint_histogram");
    if (mask)
        require_compatible(m.grid(), mask->grid(), "joint_histogram mask");
    check_normalized(m.data(), "joint_histogram moving");
    check_normalized(f.data(), "joint_histogram fixed");
    ParzenBinner binner(s);
    auto pm = place(binner, m.data(), false);
    auto pf = place(binner, f.data(), false);
    auto omega = mask_weights(mask);
    return accumulate(view(pm), view(pf), omega, s.bins, s.parzen_sigma);
}

double mi_loss(const Volume& m, const Volume& f, const HistogramSettings& s, const LabelMask* mask)
{
    return mutual_information_loss(joint_histogram(m, f, s, mask));
}

ScalarField mi_loss_gradient(const Volume& m, const Volume& f, const HistogramSettings& s, const LabelMask* mask)
{
    if (!(s.parzen_sigma > 0.0))
        fail(ErrorCode::NonDifferentiable, "MI gradient needs parzen_sigma > 0");
    require_compatible(m.grid(), f.grid(), "mi_loss_gradient");
    if (mask)
        require_compatible(m.grid(), mask->grid(), "mi_loss_gradient mask");
    check_normalized(m.data(), "mi_loss_gradient moving");
    check_normalized(f.data(), "mi_loss_gradient fixed");
    ParzenBinner binner(s);
    auto pm = place(binner, m.data(), true);
    auto pf = place(binner, f.data(), false);
    auto omega = mask_weights(mask);
    auto h = accumulate(view(pm), view(pf), omega, s.bins, s.parzen_sigma);
    std::vector<double> g(m.size());
    mi_gradient(view(pm), view(pf), omega, h, g);
    return ScalarField(m.grid(), std::move(g));
}

// ---------------------------------------------------------------------------
// Gaussian-pyramid label loss

void LossWeights::validate() const
{
    for (double w : {alpha, beta, lambda})
        if (!(w >= 0.0) || !std::isfinite(w))
            fail(ErrorCode::Config, "loss weights must be finite and non-negative");
    if (scales.empty())
        fail(ErrorCode::Config, "GPL scale list must not be empty");
    for (std::size_t s = 0; s < scales.size(); ++s) {
        if (!(scales[s] >= 0.0) || !std::isfinite(scales[s]))
            fail(ErrorCode::Config, "GPL scales must be finite and non-negative");
        if (s > 0 && !(scales[s] > scales[s - 1]))
            fail(ErrorCode::Config, "GPL scales must be strictly increasing");
    }
}

namespace {

std::vector<double> gram_matrix(int n, const GaussianKernel& k)
{
    const std::vector<double> m = axis_matrix(n, k, false);
    std::vector<double> p(m.size(), 0.0);
    const std::size_t N = std::size_t(n);
    for (std::size_t r = 0; r < N; ++r)
        for (std::size_t c = 0; c < N; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < N; ++j)
                acc += m[j * N + r] * m[j * N + c];
            p[r * N + c] = acc;
        }
    return p;
}

} // namespace

GplTarget::GplTarget(const LabelMask& f_label, std::vector<double> scales, GplMode mode)
    : grid_(f_label.grid()), scales_(std::move(scales)), mode_(mode)
{
    LossWeights probe;
    probe.scales = scales_;
    probe.validate();
    const std::size_t count = f_label.size();
    for (double s : scales_) {
        kernels_.push_back(GaussianKernel::make(s));
        const GaussianKernel& k = kernels_.back();
        std::vector<double> b(count), t(count);
        gaussian_filter(grid_, f_label.data(), b, k);
        gaussian_filter_adjoint(grid_, b, t, k);
        double sq = 0.0;
        for (double x : b)
            sq += x * x;
        target_.push_back(std::move(t));
        filtered_sq_.push_back(sq);
        std::array<std::vector<double>, 3> gram;
        if (k.radius > 0)
            for (int d = 0; d < 3; ++d)
                gram[std::size_t(d)] = gram_matrix(grid_.dims[d], k);
        gram_.push_back(std::move(gram));
    }
}

double GplTarget::evaluate(std::span<const double> m_label, std::span<double> grad) const
{
    const std::size_t count = grid_.voxel_count();
    if (m_label.size() != count || (!grad.empty() && grad.size() != count))
        fail(ErrorCode::GridMismatch, "GPL input does not match the fixed label grid");
    const double inv_scales = 1.0 / double(scales_.size());
    std::vector<double> q(count);
    if (!grad.empty())
        std::fill(grad.begin(), grad.end(), 0.0);

    double loss = mode_ == GplMode::SoftDice ? 1.0 : 0.0;
    for (std::size_t s = 0; s < scales_.size(); ++s) {
        if (kernels_[s].radius == 0) {
            std::copy(m_label.begin(), m_label.end(), q.begin());
        } else {
            const auto& gm = gram_[s];
            separable(grid_, m_label, q,
                      {taps_from_matrix(grid_.dims[0], gm[0]), taps_from_matrix(grid_.dims[1], gm[1]),
                       taps_from_matrix(grid_.dims[2], gm[2])});
        }
        const std::vector<double>& t = target_[s];
        double inter = 0.0, asq = 0.0;
        for (std::size_t n = 0; n < count; ++n) {
            inter += m_label[n] * t[n];
            asq += m_label[n] * q[n];
        }
        if (mode_ == GplMode::SoftDice) {
            const double num = 2.0 * inter + kSoftDiceEps;
            const double den = asq + filtered_sq_[s] + kSoftDiceEps;
            loss -= inv_scales * num / den;
            if (!grad.empty()) {
                // d(1 - mean D)/dm = -(1/S) (2 t den - 2 q num) / den^2
                const double ct = -inv_scales * 2.0 / den;
                const double cq = inv_scales * 2.0 * num / (den * den);
                for (std::size_t n = 0; n < count; ++n)
                    grad[n] += ct * t[n] + cq * q[n];
            }
        } else {
            const double sq = std::max(0.0, asq - 2.0 * inter + filtered_sq_[s]);
            loss += inv_scales * sq / double(count);
            if (!grad.empty()) {
                const double c = inv_scales * 2.0 / double(count);
                for (std::size_t n = 0; n < count; ++n)
                    grad[n] += c * (q[n] - t[n]);
            }
        }
    }
    return loss;
}

double gpl_loss(const LabelMask& m_label, const LabelMask& f_label, std::span<const double> scales, GplMode mode)
{
    require_compatible(m_label.grid(), f_label.grid(), "gpl_loss");
    LossWeights probe;
    probe.scales.assign(scales.begin(), scales.end());
    probe.validate();
    const std::size_t count = m_label.size();
    std::vector<double> a(count), b(count);
    double loss = mode == GplMode::SoftDice ? 1.0 : 0.0;
    for (double sigma : scales) {
        const GaussianKernel k = GaussianKernel::make(sigma);
        gaussian_filter(m_label.grid(), m_label.data(), a, k);
        gaussian_filter(f_label.grid(), f_label.data(), b, k);
        double inter = 0.0, asq = 0.0, bsq = 0.0, diff = 0.0;
        for (std::size_t n = 0; n < count; ++n) {
            inter += a[n] * b[n];
            asq += a[n] * a[n];
            bsq += b[n] * b[n];
            diff += (a[n] - b[n]) * (a[n] - b[n]);
        }
        if (mode == GplMode::SoftDice)
            loss -= (2.0 * inter + kSoftDiceEps) / (asq + bsq + kSoftDiceEps) / double(scales.size());
        else
            loss += diff / double(count) / double(scales.size());
    }
    return loss;
}

ScalarField gpl_loss_gradient(const LabelMask& m_label, const LabelMask& f_label, std::span<const double> scales,
                              GplMode mode)
{
    require_compatible(m_label.grid(), f_label.grid(), "gpl_loss_gradient");
    GplTarget target(f_label, std::vector<double>(scales.begin(), scales.end()), mode);
    std::vector<double> g(m_label.size());
    target.evaluate(m_label.data(), g);
    return ScalarField(m_label.grid(), std::move(g));
}

// ---------------------------------------------------------------------------
// Bending energy

double bending_energy(const DisplacementField& phi, DisplacementField* grad)
{
    const GridMeta& g = phi.grid();
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    if (nx < 3 || ny < 3 || nz < 3)
        fail(ErrorCode::InvalidArgument, "bending energy needs at least 3 voxels per axis");
    const std::size_t sx = 1, sy = std::size_t(nx), sz = std::size_t(nx) * std::size_t(ny);
    const double norm = 1.0 / (3.0 * double(nx - 2) * double(ny - 2) * double(nz - 2));

    if (grad) {
        if (!(grad->grid() == g))
            *grad = DisplacementField(g);
        for (int c = 0; c < 3; ++c) {
            auto gc = grad->component(c);
            std::fill(gc.begin(), gc.end(), 0.0);
        }
    }

    double energy = 0.0;
    for (int c = 0; c < 3; ++c) {
        const double* u = phi.component(c).data();
        double* gu = grad ? grad->component(c).data() : nullptr;
        std::vector<double> slice_sum(std::size_t(nz), 0.0);
        for (int k = 1; k < nz - 1; ++k) {
            double acc = 0.0;
            for (int j = 1; j < ny - 1; ++j)
                for (int i = 1; i < nx - 1; ++i) {
                    const std::size_t n = g.index(i, j, k);
                    const double xx = u[n + sx] - 2.0 * u[n] + u[n - sx];
                    const double yy = u[n + sy] - 2.0 * u[n] + u[n - sy];
                    const double zz = u[n + sz] - 2.0 * u[n] + u[n - sz];
                    const double xy = 0.25 * (u[n + sx + sy] - u[n + sx - sy] - u[n - sx + sy] + u[n - sx - sy]);
                    const double xz = 0.25 * (u[n + sx + sz] - u[n + sx - sz] - u[n - sx + sz] + u[n - sx - sz]);
                    const double yz = 0.25 * (u[n + sy + sz] - u[n + sy - sz] - u[n - sy + sz] + u[n - sy - sz]);
                    acc += xx * xx + yy * yy + zz * zz + 2.0 * (xy * xy + xz * xz + yz * yz);
                    if (gu) {
                        const double axx = 2.0 * norm * xx, ayy = 2.0 * norm * yy, azz = 2.0 * norm * zz;
                        gu[n + sx] += axx;
                        gu[n - sx] += axx;
                        gu[n + sy] += ayy;
                        gu[n - sy] += ayy;
                        gu[n + sz] += azz;
                        gu[n - sz] += azz;
                        gu[n] -= 2.0 * (axx + ayy + azz);
                        // d(2 m^2)/dm = 4 m, and each cross tap carries 1/4.
                        const double axy = norm * xy, axz = norm * xz, ayz = norm * yz;
                        gu[n + sx + sy] += axy;
                        gu[n + sx - sy] -= axy;
                        gu[n - sx + sy] -= axy;
                        gu[n - sx - sy] += axy;
                        gu[n + sx + sz] += axz;
                        gu[n + sx - sz] -= axz;
                        gu[n - sx + sz] -= axz;
                        gu[n - sx - sz] += axz;
                        gu[n + sy + sz] += ayz;
                        gu[n + sy - sz] -= ayz;
                        gu[n - sy + sz] -= ayz;
                        gu[n - sy - sz] += ayz;
                    }
                }
            slice_sum[std::size_t(k)] = acc;
        }
        for (double s : slice_sum)
            energy += s;
    }
    return energy * norm;
}

double bending_energy(const DisplacementField& phi)
{
    return bending_energy(phi, nullptr);
}

DisplacementField bending_energy_gradient(const DisplacementField& phi)
{
    DisplacementField grad(phi.grid());
    bending_energy(phi, &grad);
    return grad;
}

// ---------------------------------------------------------------------------
// Combined loss

LossBreakdown combine(double mi, double gpl, double reg, const LossWeights& w)
{
    LossBreakdown out{mi, gpl, reg, 0.0};
    out.total = w.alpha * mi + w.beta * gpl + w.lambda * reg;
    return out;
}

LossBreakdown mpl_loss(const Volume& m_warped, const Volume& f, const LabelMask& m_label_warped,
                       const LabelMask& f_label, const DisplacementField& phi, const LossWeights& w,
                       const HistogramSettings& hist)
{
    w.validate();
    require_compatible(m_warped.grid(), f.grid(), "mpl_loss");
    require_compatible(m_label_warped.grid(), f.grid(), "mpl_loss");
    require_compatible(f_label.grid(), f.grid(), "mpl_loss");
    require_compatible(phi.grid(), f.grid(), "mpl_loss");
    const double mi = mi_loss(m_warped, f, hist);
    const double gpl = gpl_loss(m_label_warped, f_label, w.scales, w.gpl_mode);
    const double reg = bending_energy(phi);
    return combine(mi, gpl, reg, w);
}

MplObjective::MplObjective(const Volume& moving, const LabelMask& moving_label, const Volume& fixed,
                           const LabelMask& fixed_label, LossSettings settings)
    : moving_(moving),
      moving_label_(moving_label),
      fixed_(fixed),
      settings_(std::move(settings)),
      binner_(settings_.histogram),
      gpl_(fixed_label, settings_.weights.scales, settings_.weights.gpl_mode)
{
    settings_.weights.validate();
    require_compatible(moving.grid(), fixed.grid(), "objective moving/fixed");
    require_compatible(moving_label.grid(), fixed.grid(), "objective moving label");
    require_compatible(fixed_label.grid(), fixed.grid(), "objective fixed label");
    check_normalized(moving.data(), "moving image");
    check_normalized(fixed.data(), "fixed image");
    if (settings_.weights.alpha > 0.0 && !(settings_.histogram.parzen_sigma > 0.0))
        fail(ErrorCode::NonDifferentiable, "MI term needs parzen_sigma > 0 for optimization");

    auto pf = place(binner_, fixed.data(), false);
    fixed_first_ = std::move(pf.first);
    fixed_w_ = std::move(pf.w);
    if (settings_.mi_use_fixed_mask)
        mask_ = fixed_label.values();
}

LossBreakdown MplObjective::evaluate(const DisplacementField& u, DisplacementField* grad) const
{
    require_compatible(u.grid(), grid(), "objective field");
    const LossWeights& w = settings_.weights;
    const std::size_t count = grid().voxel_count();
    const bool want_grad = grad != nullptr;

    // Mutual information on the warped intensities.
    auto wm = want_grad && w.alpha > 0.0 ? warp_with_gradient(moving_, u) : WarpWithGradient{};
    if (wm.values.empty())
        wm.values = std::vector<double>(warp(moving_, u).values());
    Placements pm = place(binner_, wm.values, want_grad && w.alpha > 0.0);
    PlacementView pf{binner_.width(), fixed_first_, fixed_w_, {}};
    JointHistogram h = accumulate(view(pm), pf, mask_, binner_.bins(), settings_.histogram.parzen_sigma);
    const double mi = mutual_information_loss(h);

    // Gaussian-pyramid label term on the warped label.
    auto wl = want_grad && w.beta > 0.0 ? warp_with_gradient(moving_label_, u) : WarpWithGradient{};
    if (wl.values.empty())
        wl.values = std::vector<double>(warp(moving_label_, u).values());
    else
        for (double& x : wl.values)
            x = std::clamp(x, 0.0, 1.0);
    std::vector<double> g_gpl(want_grad && w.beta > 0.0 ? count : 0);
    const double gpl = gpl_.evaluate(wl.values, g_gpl);

    DisplacementField g_reg;
    const double reg = bending_energy(u, want_grad && w.lambda > 0.0 ? &g_reg : nullptr);

    LossBreakdown out = combine(mi, gpl, reg, w);
    if (!want_grad)
        return out;

    if (!(grad->grid() == grid()))
        *grad = DisplacementField(grid());
    std::vector<double> g_mi;
    if (w.alpha > 0.0) {
        g_mi.resize(count);
        mi_gradient(view(pm), pf, mask_, h, g_mi);
    }
    for (int c = 0; c < 3; ++c) {
        auto gc = grad->component(c);
        for (std::size_t n = 0; n < count; ++n) {
            double v = 0.0;
            if (w.alpha > 0.0)
                v += w.alpha * g_mi[n] * wm.gradient[std::size_t(c)][n];
            if (w.beta > 0.0)
                v += w.beta * g_gpl[n] * wl.gradient[std::size_t(c)][n];
            if (w.lambda > 0.0)
                v += w.lambda * g_reg.component(c)[n];
            gc[n] = v;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient checking

double finite_difference_check(const ScalarFunction& loss, const GradientFunction& gradient,
                               std::span<const double> params, double step)
{
    std::vector<double> p(params.begin(), params.end());
    const std::vector<double> analytic = gradient(p);
    if (analytic.size() != p.size())
        fail(ErrorCode::InvalidArgument, "gradient length does not match parameter count");
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + step;
        const double up = loss(p);
        p[i] = keep - step;
        const double down = loss(p);
        p[i] = keep;
        const double fd = (up - down) / (2.0 * step);
        const double err = std::abs(analytic[i] - fd) / std::max(1e-8, std::abs(analytic[i]) + std::abs(fd));
        worst = std::max(worst, err);
    }
    return worst;
}

} // namespace mplreg
