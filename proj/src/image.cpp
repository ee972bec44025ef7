#include "image.hpp"

#include <sstream>

namespace mplreg {

const char* to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::Io: return "I/O error";
    case ErrorCode::Format: return "format error";
    case ErrorCode::Unsupported: return "unsupported";
    case ErrorCode::GridMismatch: return "grid mismatch";
    case ErrorCode::Domain: return "domain error";
    case ErrorCode::Config: return "configuration error";
    case ErrorCode::EmptyRoi: return "empty ROI";
    case ErrorCode::NonDifferentiable: return "non-differentiable";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::Generation: return "generation error";
    }
    return "unknown error";
}

void GridMeta::validate() const
{
    for (int d = 0; d < 3; ++d) {
        if (dims[d] <= 0)
            fail(ErrorCode::InvalidArgument, "grid dims must be positive");
        if (!(spacing[d] > 0.0) || !std::isfinite(spacing[d]))
            fail(ErrorCode::InvalidArgument, "grid spacing must be positive and finite");
        if (!std::isfinite(origin[d]))
            fail(ErrorCode::InvalidArgument, "grid origin must be finite");
    }
}

GridMeta make_grid(Dims3 dims, Vec3 spacing, Vec3 origin)
{
    GridMeta g{dims, spacing, origin};
    g.validate();
    return g;
}

void require_compatible(const GridMeta& a, const GridMeta& b, const char* what)
{
    if (a == b)
        return;
    std::ostringstream msg;
    msg << what << ": grids differ (dims " << a.dims[0] << "x" << a.dims[1] << "x" << a.dims[2]
        << " vs " << b.dims[0] << "x" << b.dims[1] << "x" << b.dims[2] << ", or spacing/origin)";
    fail(ErrorCode::GridMismatch, msg.str());
}

} // namespace mplreg
