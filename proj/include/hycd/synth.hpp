#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hycd/raster.hpp"

namespace hycd {

struct ChangeBlock {
    std::uint32_t x = 0;
    std::uint32_t y = 0;
    std::uint32_t w = 0;
    std::uint32_t h = 0;
    enum class Mode { SpectralShift, MaterialSwap };
    Mode mode = Mode::MaterialSwap;
};

/// Recipe for a synthetic before/after pair with exact ground truth.
/// The before image is a Voronoi tiling of smooth random material spectra
/// plus Gaussian noise; the after image applies the change blocks to the
/// scene content, a global illumination gain, a (periodic) translation and
/// an independent noise draw.
struct SceneSpec {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t bands = 0;
    int n_materials = 5;
    std::vector<ChangeBlock> blocks;
    double noise_sigma = 0.0;
    double illumination_gain = 1.0;
    double shift_dx = 0.0;
    double shift_dy = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ScenePair {
    RasterImage before;
    RasterImage after;
    ChangeMap truth; // exactly the change-block pixels
};

/// Deterministic: the same spec always yields a bit-identical triple.
ScenePair generate_pair(const SceneSpec& spec);

struct DetectionMetrics {
    double precision = 0.0; // 1 by convention when nothing is predicted
    double recall = 0.0;
    double f1 = 0.0;
    double iou = 0.0;
    double changed_percent = 0.0; // of the prediction, over its valid pixels
};

/// Pixelwise confusion counts between a predicted and a truth mask.
DetectionMetrics evaluate(const ChangeMap& pred, const ChangeMap& truth);

/// Scene spec from a JSON document, e.g.
/// {"width":128,"height":128,"bands":8,"n_materials":5,"noise_sigma":0.02,
///  "illumination_gain":1.0,"shift":[0,0],"seed":7,
///  "change_blocks":[{"x":48,"y":48,"w":32,"h":32,"mode":"material-swap"}]}
SceneSpec scene_spec_from_text(const std::string& json_text);
SceneSpec scene_spec_from_file(const std::string& path);

} // namespace hycd
