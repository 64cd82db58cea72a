#include "hycd/cva.hpp"

#include <cmath>
#include <cstdio>

#include "hycd/threshold.hpp"

namespace hycd {

namespace {

void require_same_shape(const RasterImage& a, const RasterImage& b) {
    if (a.width != b.width || a.height != b.height || a.bands != b.bands)
        throw ShapeError("image pair shapes differ: " + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + "x" + std::to_string(a.bands) + " vs " +
                         std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                         std::to_string(b.bands));
}

// union of the two input masks; empty when both inputs are fully valid
std::vector<std::uint8_t> union_nodata(const RasterImage& a, const RasterImage& b) {
    if (!a.has_nodata_mask() && !b.has_nodata_mask()) return {};
    std::vector<std::uint8_t> out(a.plane_size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool bad = (a.has_nodata_mask() && a.nodata[i]) || (b.has_nodata_mask() && b.nodata[i]);
        out[i] = bad ? 1 : 0;
    }
    return out;
}

} // namespace

void ReferenceVector::validate(std::uint32_t bands) const {
    if (components.size() != bands)
        throw ValidationError("reference vector length " + std::to_string(components.size()) +
                              " does not match band count " + std::to_string(bands));
    double sq = 0.0;
    for (double c : components) {
        if (!std::isfinite(c)) throw ValidationError("reference vector has a non-finite component");
        sq += c * c;
    }
    if (std::fabs(std::sqrt(sq) - 1.0) > 1e-6)
        throw ValidationError("reference vector is not unit norm");
}

ReferenceVector default_reference(std::uint32_t bands) {
    if (bands == 0) throw ValidationError("band count must be >= 1");
    const double c = std::sqrt(static_cast<double>(bands)) / static_cast<double>(bands);
    ReferenceVector ref;
    ref.components.assign(bands, c);
    return ref;
}

ScalarMap change_magnitude(const RasterImage& before, const RasterImage& after) {
    require_same_shape(before, after);
    const std::size_t plane = before.plane_size();

    ScalarMap out(before.width, before.height, ScalarKind::Magnitude);
    out.nodata = union_nodata(before, after);
    for (std::size_t p = 0; p < plane; ++p) {
        if (!out.pixel_valid(p)) continue;
        double sq = 0.0;
        for (std::uint32_t k = 0; k < before.bands; ++k) {
            const double d = static_cast<double>(after.data[k * plane + p]) -
                             static_cast<double>(before.data[k * plane + p]);
            sq += d * d;
        }
        out.values[p] = static_cast<float>(std::sqrt(sq));
    }
    return out;
}

ScalarMap phase_angle(const RasterImage& before, const RasterImage& after,
                      const ReferenceVector& ref) {
    require_same_shape(before, after);
    ref.validate(before.bands);
    const std::size_t plane = before.plane_size();

    ScalarMap out(before.width, before.height, ScalarKind::AngleRadians);
    out.nodata = union_nodata(before, after);
    if (out.nodata.empty()) out.nodata.assign(plane, 0); // zero-difference pixels become nodata
    for (std::size_t p = 0; p < plane; ++p) {
        if (out.nodata[p]) continue;
        double dot = 0.0, sq = 0.0;
        for (std::uint32_t k = 0; k < before.bands; ++k) {
            const double d = static_cast<double>(after.data[k * plane + p]) -
                             static_cast<double>(before.data[k * plane + p]);
            dot += d * ref.components[k];
            sq += d * d;
        }
        const double norm = std::sqrt(sq);
        if (norm < 1e-12) {
            out.nodata[p] = 1;
            continue;
        }
        double cosine = dot / norm;
        if (cosine > 1.0) cosine = 1.0;
        if (cosine < -1.0) cosine = -1.0;
        out.values[p] = static_cast<float>(std::acos(cosine));
    }
    return out;
}

C2vaResult c2va_change_map(const RasterImage& before, const RasterImage& after,
                           double percentile) {
    C2vaResult res;
    res.magnitude = change_magnitude(before, after);
    res.angle = phase_angle(before, after, default_reference(before.bands));
    const double threshold = percentile_threshold(res.magnitude, percentile);
    char tag[48];
    std::snprintf(tag, sizeof tag, "c2va_p%g", percentile);
    res.mask = apply_threshold(res.magnitude, threshold, tag);
    return res;
}

} // namespace hycd
