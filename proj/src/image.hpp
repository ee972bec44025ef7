#pragma once

#include "error.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace mplreg {

using Vec3 = std::array<double, 3>;
using Dims3 = std::array<int, 3>;

/// Voxel grid shared by every volume, mask and field. Index 0 runs fastest.
struct GridMeta {
    Dims3 dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    std::size_t voxel_count() const noexcept
    {
        return std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
    }

    std::size_t index(int i, int j, int k) const noexcept
    {
        return std::size_t(i) + std::size_t(dims[0]) * (std::size_t(j) + std::size_t(dims[1]) * std::size_t(k));
    }

    /// Throws InvalidArgument on non-positive dims or bad spacing/origin.
    void validate() const;

    friend bool operator==(const GridMeta&, const GridMeta&) = default;
};

GridMeta make_grid(Dims3 dims, Vec3 spacing = {1.0, 1.0, 1.0}, Vec3 origin = {0.0, 0.0, 0.0});

void require_compatible(const GridMeta& a, const GridMeta& b, const char* what);

struct IntensityTag {};
struct LabelTag {};
struct ScalarTag {};

/// Scalar image on a GridMeta. The tag separates intensity volumes, label
/// masks (values restricted to [0,1]) and derived scalar fields.
template <class Tag>
class Image {
public:
    Image() = default;

    explicit Image(const GridMeta& grid, double fill = 0.0)
        : grid_(grid)
    {
        grid_.validate();
        data_.assign(grid_.voxel_count(), fill);
        check_values();
    }

    Image(const GridMeta& grid, std::vector<double> data)
        : grid_(grid), data_(std::move(data))
    {
        grid_.validate();
        if (data_.size() != grid_.voxel_count())
            fail(ErrorCode::InvalidArgument, "image data length does not match grid dims");
        check_values();
    }

    const GridMeta& grid() const noexcept { return grid_; }
    const Dims3& dims() const noexcept { return grid_.dims; }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double operator[](std::size_t n) const noexcept { return data_[n]; }
    double& operator[](std::size_t n) noexcept { return data_[n]; }

    double at(int i, int j, int k) const noexcept { return data_[grid_.index(i, j, k)]; }
    double& at(int i, int j, int k) noexcept { return data_[grid_.index(i, j, k)]; }

    /// Re-run the invariant checks after in-place edits.
    void check_values() const;

private:
    GridMeta grid_;
    std::vector<double> data_;
};

using Volume = Image<IntensityTag>;
using LabelMask = Image<LabelTag>;
using ScalarField = Image<ScalarTag>;

template <class Tag>
void Image<Tag>::check_values() const
{
    for (double v : data_) {
        if (!std::isfinite(v))
            fail(ErrorCode::Domain, "image contains a non-finite value");
        if constexpr (std::is_same_v<Tag, LabelTag>) {
            if (v < 0.0 || v > 1.0)
                fail(ErrorCode::Domain, "label mask value outside [0,1]: " + std::to_string(v));
        }
    }
}

/// Reinterpret one image kind as another; runs the target's invariant checks.
template <class To, class From>
Image<To> image_cast(const Image<From>& src)
{
    return Image<To>(src.grid(), src.values());
}

/// Binarize at a threshold, producing a {0,1} mask.
template <class Tag>
LabelMask binarize(const Image<Tag>& src, double threshold = 0.5)
{
    std::vector<double> out(src.size());
    for (std::size_t n = 0; n < src.size(); ++n)
        out[n] = src[n] > threshold ? 1.0 : 0.0;
    return LabelMask(src.grid(), std::move(out));
}

} // namespace mplreg
