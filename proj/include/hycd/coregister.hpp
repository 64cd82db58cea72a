#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hycd/raster.hpp"

namespace hycd {

/// Dense per-pixel displacement. warp() samples the moving image at
/// (x + u, y + v), so the field maps target-grid positions into the
/// moving image.
struct FlowField {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<float> u;
    std::vector<float> v;

    FlowField() = default;
    FlowField(std::uint32_t w, std::uint32_t h)
        : width(w), height(h), u(static_cast<std::size_t>(w) * h, 0.0f),
          v(static_cast<std::size_t>(w) * h, 0.0f) {}

    /// max(|u|, |v|) over all pixels; the sanity number reported after
    /// registration (expected below ~5 px on realistic pairs).
    float max_abs() const;
};

struct FlowParams {
    int pyramid_levels = 3;
    int window_radius = 8;
    int iterations_per_level = 5;
    double regularization_eps = 1e-4;

    void validate() const;
};

/// Coarse-to-fine iterative local least-squares flow between two
/// single-band images of equal size. Each pyramid level (2x box
/// downsampling) runs `iterations_per_level` rounds of windowed 2x2
/// normal-equation solves with Tikhonov regularization; residuals are
/// Cauchy-weighted so genuinely changed content cannot hijack the solve,
/// and the field is confidence-smoothed after every round. Flow is
/// bilinearly upsampled (values doubled) between levels. Fully
/// deterministic. Pick window_radius no smaller than the expected size of
/// changed regions.
FlowField compute_flow(const RasterImage& target, const RasterImage& moving,
                       const FlowParams& params);

/// Bilinear resampling of every band at (x + u, y + v). Samples falling
/// outside the image, or touching a nodata source pixel, become nodata.
RasterImage warp(const RasterImage& img, const FlowField& flow);

/// Flow on one selected band, then warp of all bands of `after` onto the
/// `before` grid. Returns (warped after, flow).
std::pair<RasterImage, FlowField> coregister_pair(const RasterImage& before,
                                                  const RasterImage& after,
                                                  std::uint32_t band_index,
                                                  const FlowParams& params);

/// 2-band raster (u plane, v plane) for file export.
RasterImage flow_to_raster(const FlowField& flow);

} // namespace hycd
