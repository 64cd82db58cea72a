#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hycd/raster.hpp"
#include "hycd/threshold.hpp"

namespace hycd {

struct ConvLayer {
    int in_ch = 0;
    int out_ch = 0;
    bool relu = true;                // pointwise rectifier applied after the conv
    std::vector<float> weights;      // out_ch * in_ch * 3 * 3, row-major taps
    std::vector<float> bias;         // out_ch
};

struct LayerOp {
    enum class Kind { Conv3x3, Downsample2x, Relu };
    Kind kind = Kind::Conv3x3;
    ConvLayer conv;                  // used when kind == Conv3x3
};

/// Fixed-weight convolutional stack used as the feature extractor.
/// Layer indices are 1-based throughout, matching LayerSelection.
struct FeatureExtractor {
    int input_bands = 0;
    std::vector<LayerOp> layers;

    void validate() const;                       // channel chaining, finite weights
    int downsample_factor(int max_layer) const;  // product of 2x steps up to max_layer
    int channels_at(int layer) const;
};

/// Deterministic 24-layer stack: conv3x3 + rectifier everywhere except
/// 2x downsampling at layers 6, 12 and 18; channel widths step
/// 16 -> 32 -> 64 -> 128 after each downsample. Weights are uniform in
/// [-sqrt(3/fan_in), sqrt(3/fan_in)] from a seeded generator, biases zero;
/// the same seed always yields bit-identical weights.
FeatureExtractor builtin_extractor(std::uint64_t seed, int input_bands);

/// Weight file: `<path>` is an f32 little-endian blob (per conv layer:
/// weights then bias, in layer order); `<path>.json` describes
/// {input_bands, layers:[{op, in_ch?, out_ch?, relu?}...]}.
FeatureExtractor load_extractor(const std::string& path);
void save_extractor(const FeatureExtractor& ext, const std::string& path);

struct LayerSelection {
    std::vector<int> indices; // ascending, 1-based

    static LayerSelection preset(int which); // 1: [2,5]  2: [2,5,8,10]  3: [2,5,8,10,11,23]
    void validate(std::size_t n_layers) const;
    std::string label() const; // "2,5"
};

/// Activations captured at one layer. channel_ids keeps the original
/// channel index of each plane so that selection survives into the
/// hypervector provenance.
struct FeatureStack {
    int layer_index = 0;
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t channels = 0;
    std::vector<float> values; // channel-major planes, like raster bands
    std::vector<int> channel_ids;

    std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
    const float* plane(std::uint32_t c) const { return values.data() + c * plane_size(); }
    float* plane(std::uint32_t c) { return values.data() + c * plane_size(); }
};

using FeatureDelta = FeatureStack;

/// Runs the stack once and captures activations at each selected layer at
/// native (downsampled) resolution.
std::vector<FeatureStack> forward_activations(const FeatureExtractor& ext,
                                              const RasterImage& img,
                                              const LayerSelection& selection);

/// Same, but each captured stack is bilinearly upsampled back to the input
/// resolution. Image dimensions must be divisible by the downsample factor
/// at the deepest selected layer.
std::vector<FeatureStack> extract_features(const FeatureExtractor& ext,
                                           const RasterImage& img,
                                           const LayerSelection& selection);

/// Per-layer feature difference, before minus after, at full resolution.
std::vector<FeatureDelta> feature_deltas(const FeatureExtractor& ext,
                                         const RasterImage& before,
                                         const RasterImage& after,
                                         const LayerSelection& selection);

struct SelectionParams {
    int clusters_k = 4;
    double keep_percentile = 90.0; // keep channels above this variance percentile per cluster
    std::uint64_t rng_seed = 0;    // start offset of the deterministic strided k-means init

    void validate() const;
};

/// Channel reduction: k-means over pixels in delta space (deterministic
/// strided initialization, <= 50 iterations), per-cluster per-channel
/// variance, keep channels whose variance is strictly above the cluster's
/// keep_percentile nearest-rank variance, always keeping each cluster's
/// top-variance channel. Union over clusters, original channel order.
FeatureDelta select_features(const FeatureDelta& delta, const SelectionParams& params);

struct HyperVector {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t channels = 0;
    std::vector<float> values; // channel-major planes

    struct Provenance {
        int layer_index = 0;
        int channel = 0;
    };
    std::vector<Provenance> provenance;

    std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
    const float* plane(std::uint32_t c) const { return values.data() + c * plane_size(); }
};

/// Channel-wise concatenation in ascending layer order.
HyperVector build_hypervector(const std::vector<FeatureDelta>& stacks);

/// Per-pixel Euclidean norm across all channels (double accumulation).
ScalarMap hypervector_norm(const HyperVector& g);

struct DcvaResult {
    ChangeMap mask;
    ScalarMap norm;
    // Otsu runs only: bimodality coefficient of the thresholded norms,
    // a hint for how meaningful the global split is (NaN otherwise)
    double norm_bimodality = std::numeric_limits<double>::quiet_NaN();
};

/// Full pipeline: deltas -> per-layer selection -> hypervector -> norm ->
/// threshold (Otsu or adaptive). A constant norm map under Otsu is not an
/// error: it yields an all-false mask with a warning recorded on the mask.
DcvaResult dcva_change_map(const RasterImage& before, const RasterImage& after,
                           const FeatureExtractor& ext, const LayerSelection& layers,
                           const SelectionParams& sel, const ThresholdSpec& thr);

} // namespace hycd
