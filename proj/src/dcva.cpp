#include "hycd/dcva.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"

#include "binary_io.hpp"

namespace hycd {

// ---- extractor ----------------------------------------------------------

void FeatureExtractor::validate() const {
    if (input_bands < 1) throw ValidationError("extractor input_bands must be >= 1");
    if (layers.empty()) throw ValidationError("extractor has no layers");
    int ch = input_bands;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerOp& op = layers[i];
        if (op.kind == LayerOp::Kind::Conv3x3) {
            const ConvLayer& c = op.conv;
            if (c.in_ch != ch)
                throw ValidationError("layer " + std::to_string(i + 1) + ": in_ch " +
                                      std::to_string(c.in_ch) + " does not chain from " +
                                      std::to_string(ch));
            if (c.out_ch < 1) throw ValidationError("layer " + std::to_string(i + 1) + ": out_ch < 1");
            if (c.weights.size() != static_cast<std::size_t>(c.out_ch) * c.in_ch * 9)
                throw ValidationError("layer " + std::to_string(i + 1) + ": weight count mismatch");
            if (c.bias.size() != static_cast<std::size_t>(c.out_ch))
                throw ValidationError("layer " + std::to_string(i + 1) + ": bias count mismatch");
            for (float wv : c.weights)
                if (!std::isfinite(wv))
                    throw ValidationError("layer " + std::to_string(i + 1) + ": non-finite weight");
            for (float bv : c.bias)
                if (!std::isfinite(bv))
                    throw ValidationError("layer " + std::to_string(i + 1) + ": non-finite bias");
            ch = c.out_ch;
        }
    }
}

int FeatureExtractor::downsample_factor(int max_layer) const {
    int f = 1;
    for (int l = 1; l <= max_layer && l <= static_cast<int>(layers.size()); ++l)
        if (layers[static_cast<std::size_t>(l - 1)].kind == LayerOp::Kind::Downsample2x) f *= 2;
    return f;
}

int FeatureExtractor::channels_at(int layer) const {
    int ch = input_bands;
    for (int l = 1; l <= layer && l <= static_cast<int>(layers.size()); ++l) {
        const LayerOp& op = layers[static_cast<std::size_t>(l - 1)];
        if (op.kind == LayerOp::Kind::Conv3x3) ch = op.conv.out_ch;
    }
    return ch;
}

FeatureExtractor builtin_extractor(std::uint64_t seed, int input_bands) {
    if (input_bands < 1) throw ValidationError("input_bands must be >= 1");

    std::mt19937_64 rng(seed);
    auto unit = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

    FeatureExtractor ext;
    ext.input_bands = input_bands;
    int ch = input_bands;
    for (int l = 1; l <= 24; ++l) {
        if (l == 6 || l == 12 || l == 18) {
            LayerOp op;
            op.kind = LayerOp::Kind::Downsample2x;
            ext.layers.push_back(std::move(op));
            continue;
        }
        const int out = l <= 5 ? 16 : l <= 11 ? 32 : l <= 17 ? 64 : 128;
        LayerOp op;
        op.kind = LayerOp::Kind::Conv3x3;
        op.conv.in_ch = ch;
        op.conv.out_ch = out;
        op.conv.relu = true;
        const double amp = std::sqrt(3.0 / (9.0 * ch));
        op.conv.weights.resize(static_cast<std::size_t>(out) * ch * 9);
        for (auto& wv : op.conv.weights)
            wv = static_cast<float>((unit() * 2.0 - 1.0) * amp);
        op.conv.bias.assign(static_cast<std::size_t>(out), 0.0f);
        ext.layers.push_back(std::move(op));
        ch = out;
    }
    return ext;
}

FeatureExtractor load_extractor(const std::string& path) {
    const std::string header_path = path + ".json";
    std::vector<unsigned char> header_bytes;
    try {
        header_bytes = detail::read_file_bytes(header_path);
    } catch (const IoError&) {
        throw FormatError("missing extractor header: " + header_path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("unparseable extractor header " + header_path + ": " + e.what());
    }

    FeatureExtractor ext;
    if (!j.contains("input_bands") || !j["input_bands"].is_number_integer())
        throw FormatError("extractor header " + header_path + ": missing input_bands");
    ext.input_bands = j["input_bands"].get<int>();
    if (j.value("dtype", "f32") != "f32" || j.value("byte_order", "little") != "little")
        throw FormatError("extractor header " + header_path + ": unsupported encoding");
    if (!j.contains("layers") || !j["layers"].is_array())
        throw FormatError("extractor header " + header_path + ": missing layers array");

    const auto blob = detail::read_file_bytes(path);
    std::size_t offset = 0;
    auto take = [&](std::size_t count, std::vector<float>& dst) {
        if (offset + count * 4 > blob.size())
            throw SizeError("extractor blob " + path + " shorter than the header describes");
        dst.resize(count);
        for (std::size_t i = 0; i < count; ++i)
            dst[i] = detail::load_f32_le(blob.data() + offset + i * 4);
        offset += count * 4;
    };

    for (const auto& lj : j["layers"]) {
        const std::string op = lj.value("op", "");
        LayerOp layer;
        if (op == "conv3x3") {
            layer.kind = LayerOp::Kind::Conv3x3;
            layer.conv.in_ch = lj.value("in_ch", 0);
            layer.conv.out_ch = lj.value("out_ch", 0);
            layer.conv.relu = lj.value("relu", true);
            if (layer.conv.in_ch < 1 || layer.conv.out_ch < 1)
                throw FormatError("extractor header " + header_path + ": conv layer missing channels");
            take(static_cast<std::size_t>(layer.conv.out_ch) * layer.conv.in_ch * 9, layer.conv.weights);
            take(static_cast<std::size_t>(layer.conv.out_ch), layer.conv.bias);
        } else if (op == "downsample2x") {
            layer.kind = LayerOp::Kind::Downsample2x;
        } else if (op == "relu") {
            layer.kind = LayerOp::Kind::Relu;
        } else {
            throw FormatError("extractor header " + header_path + ": unknown op '" + op + "'");
        }
        ext.layers.push_back(std::move(layer));
    }
    if (offset != blob.size())
        throw SizeError("extractor blob " + path + ": " + std::to_string(blob.size() - offset) +
                        " trailing bytes");
    ext.validate();
    return ext;
}

void save_extractor(const FeatureExtractor& ext, const std::string& path) {
    ext.validate();
    nlohmann::ordered_json j;
    j["input_bands"] = ext.input_bands;
    j["dtype"] = "f32";
    j["byte_order"] = "little";
    j["layers"] = nlohmann::ordered_json::array();
    std::size_t float_count = 0;
    for (const auto& layer : ext.layers) {
        nlohmann::ordered_json lj;
        switch (layer.kind) {
        case LayerOp::Kind::Conv3x3:
            lj["op"] = "conv3x3";
            lj["in_ch"] = layer.conv.in_ch;
            lj["out_ch"] = layer.conv.out_ch;
            lj["relu"] = layer.conv.relu;
            float_count += layer.conv.weights.size() + layer.conv.bias.size();
            break;
        case LayerOp::Kind::Downsample2x:
            lj["op"] = "downsample2x";
            break;
        case LayerOp::Kind::Relu:
            lj["op"] = "relu";
            break;
        }
        j["layers"].push_back(std::move(lj));
    }

    std::vector<unsigned char> blob(float_count * 4);
    std::size_t offset = 0;
    for (const auto& layer : ext.layers) {
        if (layer.kind != LayerOp::Kind::Conv3x3) continue;
        for (float wv : layer.conv.weights) {
            detail::store_f32_le(wv, blob.data() + offset);
            offset += 4;
        }
        for (float bv : layer.conv.bias) {
            detail::store_f32_le(bv, blob.data() + offset);
            offset += 4;
        }
    }
    detail::write_file_bytes(path, blob.data(), blob.size());
    detail::write_text_file(path + ".json", j.dump(2) + "\n");
}

// ---- layer selection -----------------------------------------------------

LayerSelection LayerSelection::preset(int which) {
    switch (which) {
    case 1: return {{2, 5}};
    case 2: return {{2, 5, 8, 10}};
    case 3: return {{2, 5, 8, 10, 11, 23}};
    default: throw ValidationError("unknown layer preset " + std::to_string(which));
    }
}

void LayerSelection::validate(std::size_t n_layers) const {
    if (indices.empty()) throw ValidationError("layer selection must not be empty");
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 1 || indices[i] > static_cast<int>(n_layers))
            throw ValidationError("layer index " + std::to_string(indices[i]) +
                                  " out of range [1, " + std::to_string(n_layers) + "]");
        if (i > 0 && indices[i] <= indices[i - 1])
            throw ValidationError("layer selection must be strictly ascending");
    }
}

std::string LayerSelection::label() const {
    std::string s;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(indices[i]);
    }
    return s;
}

// ---- forward pass ---------------------------------------------------------

namespace {

struct Buffer {
    std::uint32_t w = 0, h = 0;
    int ch = 0;
    std::vector<float> v;

    Buffer() = default;
    Buffer(std::uint32_t w_, std::uint32_t h_, int ch_)
        : w(w_), h(h_), ch(ch_), v(static_cast<std::size_t>(w_) * h_ * ch_, 0.0f) {}

    std::size_t plane() const { return static_cast<std::size_t>(w) * h; }
    const float* plane_ptr(int c) const { return v.data() + static_cast<std::size_t>(c) * plane(); }
    float* plane_ptr(int c) { return v.data() + static_cast<std::size_t>(c) * plane(); }
};

// zero-padded 3x3 convolution, per-output-channel f64 accumulation plane
Buffer conv3x3(const Buffer& in, const ConvLayer& layer) {
    const std::uint32_t w = in.w, h = in.h;
    Buffer out(w, h, layer.out_ch);
    std::vector<double> acc(in.plane());
    for (int co = 0; co < layer.out_ch; ++co) {
        std::fill(acc.begin(), acc.end(), static_cast<double>(layer.bias[static_cast<std::size_t>(co)]));
        for (int ci = 0; ci < layer.in_ch; ++ci) {
            const float* ip = in.plane_ptr(ci);
            const float* taps = layer.weights.data() +
                                (static_cast<std::size_t>(co) * layer.in_ch + ci) * 9;
            for (std::uint32_t y = 0; y < h; ++y) {
                double* arow = acc.data() + static_cast<std::size_t>(y) * w;
                for (int ky = -1; ky <= 1; ++ky) {
                    const std::int64_t yy = static_cast<std::int64_t>(y) + ky;
                    if (yy < 0 || yy >= static_cast<std::int64_t>(h)) continue;
                    const float* row = ip + static_cast<std::size_t>(yy) * w;
                    const double t0 = taps[(ky + 1) * 3 + 0];
                    const double t1 = taps[(ky + 1) * 3 + 1];
                    const double t2 = taps[(ky + 1) * 3 + 2];
                    if (w == 1) {
                        arow[0] += t1 * row[0];
                        continue;
                    }
                    arow[0] += t1 * row[0] + t2 * row[1];
                    for (std::uint32_t x = 1; x + 1 < w; ++x)
                        arow[x] += t0 * row[x - 1] + t1 * row[x] + t2 * row[x + 1];
                    arow[w - 1] += t0 * row[w - 2] + t1 * row[w - 1];
                }
            }
        }
        float* op = out.plane_ptr(co);
        if (layer.relu) {
            for (std::size_t i = 0; i < acc.size(); ++i)
                op[i] = acc[i] > 0.0 ? static_cast<float>(acc[i]) : 0.0f;
        } else {
            for (std::size_t i = 0; i < acc.size(); ++i) op[i] = static_cast<float>(acc[i]);
        }
    }
    return out;
}

Buffer downsample2x(const Buffer& in) {
    Buffer out(in.w / 2, in.h / 2, in.ch);
    for (int c = 0; c < in.ch; ++c) {
        const float* ip = in.plane_ptr(c);
        float* op = out.plane_ptr(c);
        for (std::uint32_t y = 0; y < out.h; ++y)
            for (std::uint32_t x = 0; x < out.w; ++x) {
                const std::size_t i0 = static_cast<std::size_t>(2 * y) * in.w + 2 * x;
                const std::size_t i1 = i0 + in.w;
                op[static_cast<std::size_t>(y) * out.w + x] =
                    0.25f * (ip[i0] + ip[i0 + 1] + ip[i1] + ip[i1 + 1]);
            }
    }
    return out;
}

void relu_inplace(Buffer& b) {
    for (auto& x : b.v)
        if (x < 0.0f) x = 0.0f;
}

std::vector<float> upsample_plane(const float* src, std::uint32_t sw, std::uint32_t sh,
                                  std::uint32_t w, std::uint32_t h) {
    std::vector<float> out(static_cast<std::size_t>(w) * h);
    const double xs = static_cast<double>(sw) / w;
    const double ys = static_cast<double>(sh) / h;
    for (std::uint32_t y = 0; y < h; ++y) {
        double sy = (y + 0.5) * ys - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(sh - 1));
        const std::uint32_t y0 = static_cast<std::uint32_t>(sy);
        const std::uint32_t y1 = std::min(y0 + 1, sh - 1);
        const double fy = sy - y0;
        for (std::uint32_t x = 0; x < w; ++x) {
            double sx = (x + 0.5) * xs - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(sw - 1));
            const std::uint32_t x0 = static_cast<std::uint32_t>(sx);
            const std::uint32_t x1 = std::min(x0 + 1, sw - 1);
            const double fx = sx - x0;
            const double top = src[static_cast<std::size_t>(y0) * sw + x0] * (1.0 - fx) +
                               src[static_cast<std::size_t>(y0) * sw + x1] * fx;
            const double bot = src[static_cast<std::size_t>(y1) * sw + x0] * (1.0 - fx) +
                               src[static_cast<std::size_t>(y1) * sw + x1] * fx;
            out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(top * (1.0 - fy) + bot * fy);
        }
    }
    return out;
}

FeatureStack stack_from_buffer(const Buffer& b, int layer_index) {
    FeatureStack s;
    s.layer_index = layer_index;
    s.width = b.w;
    s.height = b.h;
    s.channels = static_cast<std::uint32_t>(b.ch);
    s.values = b.v;
    s.channel_ids.resize(static_cast<std::size_t>(b.ch));
    for (int c = 0; c < b.ch; ++c) s.channel_ids[static_cast<std::size_t>(c)] = c;
    return s;
}

} // namespace

std::vector<FeatureStack> forward_activations(const FeatureExtractor& ext,
                                              const RasterImage& img,
                                              const LayerSelection& selection) {
    ext.validate();
    selection.validate(ext.layers.size());
    img.validate();
    if (static_cast<int>(img.bands) != ext.input_bands)
        throw ShapeError("image has " + std::to_string(img.bands) + " bands, extractor expects " +
                         std::to_string(ext.input_bands));
    const int max_layer = selection.indices.back();
    const int factor = ext.downsample_factor(max_layer);
    if (img.width % static_cast<std::uint32_t>(factor) != 0 ||
        img.height % static_cast<std::uint32_t>(factor) != 0)
        throw PaddingError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                           " not divisible by downsample factor " + std::to_string(factor) +
                           " at layer " + std::to_string(max_layer) + "; pad the input first");

    Buffer cur(img.width, img.height, static_cast<int>(img.bands));
    cur.v = img.data;

    std::vector<FeatureStack> captured;
    std::size_t next = 0;
    for (int l = 1; l <= max_layer; ++l) {
        const LayerOp& op = ext.layers[static_cast<std::size_t>(l - 1)];
        switch (op.kind) {
        case LayerOp::Kind::Conv3x3: cur = conv3x3(cur, op.conv); break;
        case LayerOp::Kind::Downsample2x: cur = downsample2x(cur); break;
        case LayerOp::Kind::Relu: relu_inplace(cur); break;
        }
        if (next < selection.indices.size() && selection.indices[next] == l) {
            captured.push_back(stack_from_buffer(cur, l));
            ++next;
        }
    }
    return captured;
}

std::vector<FeatureStack> extract_features(const FeatureExtractor& ext, const RasterImage& img,
                                           const LayerSelection& selection) {
    std::vector<FeatureStack> native = forward_activations(ext, img, selection);
    for (auto& stack : native) {
        if (stack.width == img.width && stack.height == img.height) continue;
        FeatureStack up;
        up.layer_index = stack.layer_index;
        up.width = img.width;
        up.height = img.height;
        up.channels = stack.channels;
        up.channel_ids = stack.channel_ids;
        up.values.resize(static_cast<std::size_t>(img.width) * img.height * stack.channels);
        for (std::uint32_t c = 0; c < stack.channels; ++c) {
            const auto plane = upsample_plane(stack.plane(c), stack.width, stack.height,
                                              img.width, img.height);
            std::copy(plane.begin(), plane.end(), up.values.begin() + c * up.plane_size());
        }
        stack = std::move(up);
    }
    return native;
}

std::vector<FeatureDelta> feature_deltas(const FeatureExtractor& ext, const RasterImage& before,
                                         const RasterImage& after,
                                         const LayerSelection& selection) {
    if (before.width != after.width || before.height != after.height ||
        before.bands != after.bands)
        throw ShapeError("feature_deltas inputs must share dimensions");
    std::vector<FeatureStack> fb = extract_features(ext, before, selection);
    std::vector<FeatureStack> fa = extract_features(ext, after, selection);
    for (std::size_t i = 0; i < fb.size(); ++i)
        for (std::size_t j = 0; j < fb[i].values.size(); ++j)
            fb[i].values[j] -= fa[i].values[j];
    return fb;
}

// ---- feature selection -----------------------------------------------------

void SelectionParams::validate() const {
    if (clusters_k < 1) throw ValidationError("clusters_k must be >= 1");
    if (!(keep_percentile > 0.0 && keep_percentile < 100.0))
        throw ValidationError("keep_percentile must be in (0, 100)");
}

FeatureDelta select_features(const FeatureDelta& delta, const SelectionParams& params) {
    params.validate();
    const std::size_t n = delta.plane_size();
    const std::size_t channels = delta.channels;
    if (channels == 0 || n == 0) throw ValidationError("empty feature delta");
    const std::size_t k = static_cast<std::size_t>(params.clusters_k);
    if (k > n) throw ClusteringError("clusters_k exceeds pixel count");

    auto pixel_dim = [&](std::size_t pix, std::size_t c) -> double {
        return static_cast<double>(delta.values[c * n + pix]);
    };

    // deterministic strided init: first k distinct pixel vectors, walking
    // from a seed-dependent offset, then a linear sweep as fallback
    std::vector<std::vector<double>> centroids;
    centroids.reserve(k);
    auto is_new_centroid = [&](std::size_t pix) {
        for (const auto& c : centroids) {
            bool same = true;
            for (std::size_t d = 0; d < channels; ++d)
                if (pixel_dim(pix, d) != c[d]) {
                    same = false;
                    break;
                }
            if (same) return false;
        }
        return true;
    };
    auto push_centroid = [&](std::size_t pix) {
        std::vector<double> c(channels);
        for (std::size_t d = 0; d < channels; ++d) c[d] = pixel_dim(pix, d);
        centroids.push_back(std::move(c));
    };
    const std::size_t stride = std::max<std::size_t>(1, n / k);
    const std::size_t offset = static_cast<std::size_t>(params.rng_seed % n);
    for (std::size_t j = 0; j < n && centroids.size() < k; ++j) {
        const std::size_t pix = (offset + j * stride) % n;
        if (is_new_centroid(pix)) push_centroid(pix);
    }
    for (std::size_t pix = 0; pix < n && centroids.size() < k; ++pix)
        if (is_new_centroid(pix)) push_centroid(pix);
    if (centroids.size() < k)
        throw ClusteringError("fewer distinct pixel vectors (" + std::to_string(centroids.size()) +
                              ") than clusters_k (" + std::to_string(k) + ")");

    // k-means, <= 50 iterations, ties to the lowest centroid index
    std::vector<std::size_t> assign(n, 0);
    std::vector<std::vector<double>> sums(k, std::vector<double>(channels));
    std::vector<std::size_t> counts(k);
    for (int iter = 0; iter < 50; ++iter) {
        for (std::size_t pix = 0; pix < n; ++pix) {
            std::size_t best = 0;
            double best_d = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                double d = 0.0;
                for (std::size_t dim = 0; dim < channels; ++dim) {
                    const double diff = pixel_dim(pix, dim) - centroids[c][dim];
                    d += diff * diff;
                }
                if (c == 0 || d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            assign[pix] = best;
        }
        for (std::size_t c = 0; c < k; ++c) {
            std::fill(sums[c].begin(), sums[c].end(), 0.0);
            counts[c] = 0;
        }
        for (std::size_t pix = 0; pix < n; ++pix) {
            auto& s = sums[assign[pix]];
            for (std::size_t dim = 0; dim < channels; ++dim) s[dim] += pixel_dim(pix, dim);
            ++counts[assign[pix]];
        }
        double movement = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue; // empty cluster keeps its centroid
            double move = 0.0;
            for (std::size_t dim = 0; dim < channels; ++dim) {
                const double nc = sums[c][dim] / static_cast<double>(counts[c]);
                const double diff = nc - centroids[c][dim];
                move += diff * diff;
                centroids[c][dim] = nc;
            }
            movement = std::max(movement, std::sqrt(move));
        }
        if (movement < 1e-6) break;
    }

    // per-cluster per-channel variance; keep a channel when it is strictly
    // above the cluster's keep_percentile variance, plus the cluster's
    // top-variance channel so every cluster contributes at least one
    std::vector<std::uint8_t> keep(channels, 0);
    std::vector<double> mean(channels), var(channels);
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t pix = 0; pix < n; ++pix) {
            if (assign[pix] != c) continue;
            for (std::size_t dim = 0; dim < channels; ++dim) mean[dim] += pixel_dim(pix, dim);
        }
        for (std::size_t dim = 0; dim < channels; ++dim) mean[dim] /= static_cast<double>(counts[c]);
        std::fill(var.begin(), var.end(), 0.0);
        for (std::size_t pix = 0; pix < n; ++pix) {
            if (assign[pix] != c) continue;
            for (std::size_t dim = 0; dim < channels; ++dim) {
                const double d = pixel_dim(pix, dim) - mean[dim];
                var[dim] += d * d;
            }
        }
        for (std::size_t dim = 0; dim < channels; ++dim) var[dim] /= static_cast<double>(counts[c]);

        const double cutoff = nearest_rank_percentile(var, params.keep_percentile);
        std::size_t top = 0;
        for (std::size_t dim = 0; dim < channels; ++dim) {
            if (var[dim] > cutoff) keep[dim] = 1;
            if (var[dim] > var[top]) top = dim;
        }
        keep[top] = 1;
    }

    FeatureDelta out;
    out.layer_index = delta.layer_index;
    out.width = delta.width;
    out.height = delta.height;
    std::vector<std::size_t> kept;
    for (std::size_t dim = 0; dim < channels; ++dim)
        if (keep[dim]) kept.push_back(dim);
    out.channels = static_cast<std::uint32_t>(kept.size());
    out.values.resize(kept.size() * n);
    out.channel_ids.resize(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        std::copy_n(delta.values.data() + kept[i] * n, n, out.values.data() + i * n);
        out.channel_ids[i] = delta.channel_ids.empty() ? static_cast<int>(kept[i])
                                                       : delta.channel_ids[kept[i]];
    }
    return out;
}

HyperVector build_hypervector(const std::vector<FeatureDelta>& stacks) {
    if (stacks.empty()) throw ValidationError("no feature stacks to concatenate");
    std::vector<const FeatureDelta*> ordered;
    ordered.reserve(stacks.size());
    for (const auto& s : stacks) ordered.push_back(&s);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const FeatureDelta* a, const FeatureDelta* b) {
                         return a->layer_index < b->layer_index;
                     });

    HyperVector g;
    g.width = ordered.front()->width;
    g.height = ordered.front()->height;
    std::size_t total = 0;
    for (const auto* s : ordered) {
        if (s->width != g.width || s->height != g.height)
            throw ShapeError("feature stacks must share spatial dimensions");
        total += s->channels;
    }
    g.channels = static_cast<std::uint32_t>(total);
    g.values.reserve(total * g.plane_size());
    for (const auto* s : ordered) {
        g.values.insert(g.values.end(), s->values.begin(), s->values.end());
        for (std::uint32_t c = 0; c < s->channels; ++c)
            g.provenance.push_back({s->layer_index,
                                    s->channel_ids.empty() ? static_cast<int>(c)
                                                           : s->channel_ids[c]});
    }
    return g;
}

ScalarMap hypervector_norm(const HyperVector& g) {
    ScalarMap out(g.width, g.height, ScalarKind::HypervectorNorm);
    const std::size_t n = g.plane_size();
    for (std::size_t p = 0; p < n; ++p) {
        double sq = 0.0;
        for (std::uint32_t c = 0; c < g.channels; ++c) {
            const double v = static_cast<double>(g.values[c * n + p]);
            sq += v * v;
        }
        out.values[p] = static_cast<float>(std::sqrt(sq));
    }
    return out;
}

DcvaResult dcva_change_map(const RasterImage& before, const RasterImage& after,
                           const FeatureExtractor& ext, const LayerSelection& layers,
                           const SelectionParams& sel, const ThresholdSpec& thr) {
    thr.validate();
    if (thr.method == ThresholdSpec::Method::Percentile)
        throw ValidationError("dcva_change_map expects an otsu or adaptive threshold");

    std::vector<FeatureDelta> deltas = feature_deltas(ext, before, after, layers);
    std::vector<FeatureDelta> selected;
    selected.reserve(deltas.size());
    for (const auto& d : deltas) {
        // a near-constant delta (identical pair) supports fewer distinct
        // pixel vectors than clusters_k; fall back to a coarser clustering
        // instead of failing the whole map
        SelectionParams params = sel;
        while (true) {
            try {
                selected.push_back(select_features(d, params));
                break;
            } catch (const ClusteringError&) {
                if (params.clusters_k <= 1) throw;
                --params.clusters_k;
            }
        }
    }

    const HyperVector g = build_hypervector(selected);
    DcvaResult res;
    res.norm = hypervector_norm(g);

    // nodata pixels of either input are excluded from threshold statistics
    // and can never be marked as change
    if (before.has_nodata_mask() || after.has_nodata_mask()) {
        res.norm.nodata.assign(res.norm.pixel_count(), 0);
        for (std::size_t i = 0; i < res.norm.nodata.size(); ++i) {
            const bool bad = (before.has_nodata_mask() && before.nodata[i]) ||
                             (after.has_nodata_mask() && after.nodata[i]);
            res.norm.nodata[i] = bad ? 1 : 0;
        }
    }

    if (thr.method == ThresholdSpec::Method::Otsu) {
        std::vector<float> valid;
        valid.reserve(res.norm.values.size());
        for (std::size_t i = 0; i < res.norm.values.size(); ++i)
            if (res.norm.pixel_valid(i)) valid.push_back(res.norm.values[i]);
        res.norm_bimodality = bimodality_coefficient(valid);
        try {
            const double t = otsu_threshold(res.norm, thr.otsu_bins);
            res.mask = apply_threshold(res.norm, t, "dcva_otsu");
        } catch (const DegenerateDistributionError& e) {
            // constant norm map (e.g. an identical pair): report 0% change
            float constant = 0.0f;
            for (std::size_t i = 0; i < res.norm.values.size(); ++i)
                if (res.norm.pixel_valid(i)) {
                    constant = res.norm.values[i];
                    break;
                }
            res.mask = apply_threshold(res.norm, static_cast<double>(constant), "dcva_otsu");
            res.mask.warning = std::string("degenerate norm distribution, no threshold computed: ") +
                               e.what();
        }
    } else {
        res.mask = adaptive_threshold_map(res.norm, thr.adaptive_window_radius, thr.adaptive_k);
        res.mask.method_tag = "dcva_ada(L=" + layers.label() + ")";
    }
    return res;
}

} // namespace hycd
