#include "nifti.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace mplreg::nifti {

namespace {

// Field offsets within the 348-byte header.
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffIntentCode = 68;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffQformCode = 252;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffQoffset = 268;
constexpr std::size_t kOffSrow = 280;
constexpr std::size_t kOffMagic = 344;

template <class T>
T load(const unsigned char* p, bool swap)
{
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, p, sizeof(T));
    if (swap)
        std::reverse(buf, buf + sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

template <class T>
void store(unsigned char* p, T v)
{
    static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");
    std::memcpy(p, &v, sizeof(T));
}

std::size_t bytes_per_voxel(DataType t)
{
    switch (t) {
    case DataType::UInt8: return 1;
    case DataType::Int16: return 2;
    case DataType::Float32: return 4;
    }
    return 0;
}

} // namespace

RawImage read(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::Io, "cannot open " + path.string());

    unsigned char hdr[kHeaderSize];
    in.read(reinterpret_cast<char*>(hdr), kHeaderSize);
    if (in.gcount() != kHeaderSize)
        fail(ErrorCode::Io, "truncated NIfTI header in " + path.string());

    if (std::memcmp(hdr + kOffMagic, "n+1\0", 4) != 0)
        fail(ErrorCode::Format, "not a single-file NIfTI-1 image (bad magic): " + path.string());

    bool swap = false;
    if (load<std::int32_t>(hdr, false) != kHeaderSize) {
        if (load<std::int32_t>(hdr, true) != kHeaderSize)
            fail(ErrorCode::Format, "bad sizeof_hdr in " + path.string());
        swap = true;
    }

    std::int16_t dim[8];
    for (int i = 0; i < 8; ++i)
        dim[i] = load<std::int16_t>(hdr + kOffDim + 2 * i, swap);
    if (dim[0] < 1 || dim[0] > 7)
        fail(ErrorCode::Format, "bad dim[0] in " + path.string());

    RawImage out;
    for (int d = 0; d < 3; ++d)
        out.grid.dims[d] = d < dim[0] ? std::max<int>(dim[d + 1], 1) : 1;
    int components = 1;
    for (int d = 4; d <= dim[0]; ++d)
        components *= std::max<int>(dim[d], 1);
    out.components = components;
    out.intent_code = load<std::int16_t>(hdr + kOffIntentCode, swap);

    for (int d = 0; d < 3; ++d) {
        float pd = load<float>(hdr + kOffPixdim + 4 * (d + 1), swap);
        out.grid.spacing[d] = pd > 0.0f ? double(pd) : 1.0;
    }
    std::int16_t qform = load<std::int16_t>(hdr + kOffQformCode, swap);
    std::int16_t sform = load<std::int16_t>(hdr + kOffSformCode, swap);
    if (qform > 0) {
        for (int d = 0; d < 3; ++d)
            out.grid.origin[d] = load<float>(hdr + kOffQoffset + 4 * d, swap);
    } else if (sform > 0) {
        for (int d = 0; d < 3; ++d)
            out.grid.origin[d] = load<float>(hdr + kOffSrow + 16 * d + 12, swap);
    }
    out.grid.validate();

    auto raw_type = load<std::int16_t>(hdr + kOffDatatype, swap);
    auto type = DataType(raw_type);
    if (type != DataType::UInt8 && type != DataType::Int16 && type != DataType::Float32)
        fail(ErrorCode::Unsupported, "unsupported NIfTI datatype " + std::to_string(raw_type));

    float vox_offset = load<float>(hdr + kOffVoxOffset, swap);
    float slope = load<float>(hdr + kOffSclSlope, swap);
    float inter = load<float>(hdr + kOffSclInter, swap);
    bool rescale = slope != 0.0f && std::isfinite(slope);

    std::size_t count = out.grid.voxel_count() * std::size_t(components);
    std::size_t bpv = bytes_per_voxel(type);
    std::vector<unsigned char> payload(count * bpv);
    in.seekg(std::streamoff(vox_offset > 0 ? vox_offset : kVoxOffset));
    in.read(reinterpret_cast<char*>(payload.data()), std::streamsize(payload.size()));
    if (std::size_t(in.gcount()) != payload.size())
        fail(ErrorCode::Io, "truncated NIfTI payload in " + path.string());

    out.data.resize(count);
    for (std::size_t n = 0; n < count; ++n) {
        const unsigned char* p = payload.data() + n * bpv;
        double v = 0.0;
        switch (type) {
        case DataType::UInt8: v = *p; break;
        case DataType::Int16: v = load<std::int16_t>(p, swap); break;
        case DataType::Float32: v = load<float>(p, swap); break;
        }
        if (rescale)
            v = v * double(slope) + double(inter);
        if (!std::isfinite(v))
            fail(ErrorCode::Domain, "non-finite voxel value in " + path.string());
        out.data[n] = v;
    }
    return out;
}

void write(const std::filesystem::path& path, const GridMeta& grid, std::span<const double> data,
           int components, std::int16_t intent_code)
{
    grid.validate();
    if (components < 1 || data.size() != grid.voxel_count() * std::size_t(components))
        fail(ErrorCode::InvalidArgument, "payload size does not match grid");
    for (int d = 0; d < 3; ++d)
        if (grid.dims[d] > 32767)
            fail(ErrorCode::Unsupported, "dimension too large for NIfTI-1");

    unsigned char hdr[kVoxOffset] = {};
    store<std::int32_t>(hdr, kHeaderSize);
    std::int16_t ndim = components > 1 ? 4 : 3;
    store<std::int16_t>(hdr + kOffDim, ndim);
    for (int d = 0; d < 3; ++d)
        store<std::int16_t>(hdr + kOffDim + 2 * (d + 1), std::int16_t(grid.dims[d]));
    for (int d = 4; d < 8; ++d)
        store<std::int16_t>(hdr + kOffDim + 2 * d, 1);
    if (components > 1)
        store<std::int16_t>(hdr + kOffDim + 8, std::int16_t(components));
    store<std::int16_t>(hdr + kOffIntentCode, intent_code);
    store<std::int16_t>(hdr + kOffDatatype, std::int16_t(DataType::Float32));
    store<std::int16_t>(hdr + kOffBitpix, 32);
    store<float>(hdr + kOffPixdim, 1.0f); // qfac
    for (int d = 0; d < 3; ++d)
        store<float>(hdr + kOffPixdim + 4 * (d + 1), float(grid.spacing[d]));
    for (int d = 4; d < 8; ++d)
        store<float>(hdr + kOffPixdim + 4 * d, 1.0f);
    store<float>(hdr + kOffVoxOffset, float(kVoxOffset));
    store<float>(hdr + kOffSclSlope, 0.0f);
    store<float>(hdr + kOffSclInter, 0.0f);
    hdr[kOffXyztUnits] = 2; // mm
    store<std::int16_t>(hdr + kOffQformCode, 1);
    store<std::int16_t>(hdr + kOffSformCode, 1);
    for (int d = 0; d < 3; ++d) {
        store<float>(hdr + kOffQoffset + 4 * d, float(grid.origin[d]));
        store<float>(hdr + kOffSrow + 16 * d + 4 * d, float(grid.spacing[d]));
        store<float>(hdr + kOffSrow + 16 * d + 12, float(grid.origin[d]));
    }
    std::memcpy(hdr + kOffMagic, "n+1\0", 4);

    std::vector<float> payload(data.size());
    for (std::size_t n = 0; n < data.size(); ++n)
        payload[n] = float(data[n]);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(hdr), kVoxOffset);
    out.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size() * sizeof(float)));
    if (!out)
        fail(ErrorCode::Io, "write failed for " + path.string());
}

} // namespace mplreg::nifti

namespace mplreg {

Volume read_nifti(const std::filesystem::path& path)
{
    auto raw = nifti::read(path);
    if (raw.components != 1)
        fail(ErrorCode::Unsupported, "expected a 3-D scalar image: " + path.string());
    return Volume(raw.grid, std::move(raw.data));
}

LabelMask read_nifti_label(const std::filesystem::path& path)
{
    return binarize(read_nifti(path));
}

} // namespace mplreg
