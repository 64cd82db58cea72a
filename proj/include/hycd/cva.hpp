#pragma once

#include <cstdint>
#include <vector>

#include "hycd/raster.hpp"

namespace hycd {

/// Unit-norm reference direction in band space for the phase angle.
/// Components are double precision so that exactly parallel difference
/// vectors really produce cos = 1.
struct ReferenceVector {
    std::vector<double> components;

    /// Checks length against the band count and ||.||2 = 1 within 1e-6.
    void validate(std::uint32_t bands) const;
};

/// All components sqrt(B)/B, unit norm by construction.
ReferenceVector default_reference(std::uint32_t bands);

/// Per-pixel Euclidean norm over bands of (after - before). Pixels nodata
/// in either input are nodata in the output.
ScalarMap change_magnitude(const RasterImage& before, const RasterImage& after);

/// Angle between the per-pixel difference vector and the reference,
/// acos clamped to [0, pi]. Pixels with ||diff|| < 1e-12 become nodata.
ScalarMap phase_angle(const RasterImage& before, const RasterImage& after,
                      const ReferenceVector& ref);

struct C2vaResult {
    ChangeMap mask;
    ScalarMap magnitude;
    ScalarMap angle;
};

/// Magnitude + angle maps and a binary mask thresholded at the given
/// nearest-rank percentile of the magnitude over valid pixels (strict >).
C2vaResult c2va_change_map(const RasterImage& before, const RasterImage& after,
                           double percentile = 90.0);

} // namespace hycd
