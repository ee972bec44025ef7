#pragma once

#include "image.hpp"

#include <cstdint>
#include <filesystem>

namespace mplreg {

// Single-file NIfTI-1 (.nii) subset: uint8, int16 and float32 payloads,
// no compression, orientation reduced to spacing + origin.
namespace nifti {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

enum class DataType : std::int16_t {
    UInt8 = 2,
    Int16 = 4,
    Float32 = 16,
};

/// Decoded file contents. Multi-component images (4-D, dim[4] = components)
/// keep each component as a contiguous block, as the format lays them out.
struct RawImage {
    GridMeta grid;
    int components = 1;
    std::int16_t intent_code = 0;
    std::vector<double> data;
};

RawImage read(const std::filesystem::path& path);

/// Writes a float32 image. data.size() must equal voxel_count * components.
void write(const std::filesystem::path& path, const GridMeta& grid, std::span<const double> data,
           int components = 1, std::int16_t intent_code = 0);

} // namespace nifti

Volume read_nifti(const std::filesystem::path& path);

/// Reads a mask file; values above 0.5 become 1, everything else 0.
LabelMask read_nifti_label(const std::filesystem::path& path);

template <class Tag>
void write_nifti(const Image<Tag>& image, const std::filesystem::path& path)
{
    nifti::write(path, image.grid(), image.data(), 1, 0);
}

} // namespace mplreg
