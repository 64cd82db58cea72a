#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hycd/errors.hpp"

namespace hycd {

/// Multi-band float image cube, stored band-sequential:
/// value (x, y, band k) lives at data[k*width*height + y*width + x].
/// A pixel flagged in `nodata` is excluded from all statistics and forced
/// to "no change" in masks; its data values are kept at 0.
struct RasterImage {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t bands = 0;
    std::vector<float> data;
    std::optional<std::vector<float>> wavelengths_nm;
    std::vector<std::uint8_t> nodata; // per-pixel, 1 = nodata; empty = all valid

    RasterImage() = default;
    RasterImage(std::uint32_t w, std::uint32_t h, std::uint32_t b)
        : width(w), height(h), bands(b),
          data(static_cast<std::size_t>(w) * h * b, 0.0f) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }

    std::size_t index(std::uint32_t x, std::uint32_t y, std::uint32_t band) const {
        return static_cast<std::size_t>(band) * plane_size() +
               static_cast<std::size_t>(y) * width + x;
    }

    float at(std::uint32_t x, std::uint32_t y, std::uint32_t band) const {
        return data[index(x, y, band)];
    }
    float& at(std::uint32_t x, std::uint32_t y, std::uint32_t band) {
        return data[index(x, y, band)];
    }

    const float* plane(std::uint32_t band) const { return data.data() + band * plane_size(); }
    float* plane(std::uint32_t band) { return data.data() + band * plane_size(); }

    bool has_nodata_mask() const { return !nodata.empty(); }
    bool pixel_valid(std::uint32_t x, std::uint32_t y) const {
        return nodata.empty() || nodata[static_cast<std::size_t>(y) * width + x] == 0;
    }
    std::uint64_t valid_count() const;

    /// Throws ValidationError on any broken invariant (size mismatch,
    /// non-finite value at a valid pixel, bad wavelength table).
    void validate() const;
};

enum class ScalarKind { Magnitude, AngleRadians, HypervectorNorm };

/// One float per pixel plus a semantic tag, with the same nodata convention
/// as RasterImage.
struct ScalarMap {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    ScalarKind kind = ScalarKind::Magnitude;
    std::vector<float> values;
    std::vector<std::uint8_t> nodata;

    ScalarMap() = default;
    ScalarMap(std::uint32_t w, std::uint32_t h, ScalarKind k)
        : width(w), height(h), kind(k),
          values(static_cast<std::size_t>(w) * h, 0.0f) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    float at(std::uint32_t x, std::uint32_t y) const {
        return values[static_cast<std::size_t>(y) * width + x];
    }
    bool pixel_valid(std::size_t i) const { return nodata.empty() || nodata[i] == 0; }
    std::uint64_t valid_count() const;
};

/// Binary change mask (1 = change) plus provenance of the threshold that
/// produced it. `valid_pixels` is the denominator for percent reporting;
/// `warning` is non-empty when a degenerate case was downgraded to an
/// all-false mask instead of an error.
struct ChangeMap {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<std::uint8_t> mask;
    double threshold_used = 0.0;
    std::string method_tag;
    std::uint64_t valid_pixels = 0;
    std::string warning;

    ChangeMap() = default;
    ChangeMap(std::uint32_t w, std::uint32_t h)
        : width(w), height(h), mask(static_cast<std::size_t>(w) * h, 0),
          valid_pixels(static_cast<std::uint64_t>(w) * h) {}

    std::uint64_t changed_count() const;
    double changed_percent() const; // 100 * changed / valid_pixels
};

// ---- file I/O ----------------------------------------------------------
//
// Raster format: `<path>` holds width*height*bands little-endian f32 in
// band-sequential order; `<path>.json` is a sidecar header
// {width, height, bands, dtype:"f32", byte_order:"little",
//  wavelengths_nm?, nodata?:"nan"}. With nodata:"nan", pixels whose value
// is NaN in any band are flagged nodata and zeroed in memory.

RasterImage read_raster(const std::string& path);
void write_raster(const RasterImage& img, const std::string& path);

/// Binary PGM (P5, maxval 255), 255 = change, 0 = no change.
void write_mask_pgm(const ChangeMap& map, const std::string& path);
ChangeMap read_mask_pgm(const std::string& path);

/// size x size x bands copy with top-left corner (x0, y0).
RasterImage extract_patch(const RasterImage& img, std::uint32_t x0, std::uint32_t y0,
                          std::uint32_t size);

/// Copy of the selected bands, in the given order. Wavelength metadata is
/// kept only when the selected subset is still strictly increasing.
RasterImage select_bands(const RasterImage& img, const std::vector<std::uint32_t>& band_indices);

/// 1-band raster view of a scalar map, for file export.
RasterImage scalar_to_raster(const ScalarMap& map);

} // namespace hycd
