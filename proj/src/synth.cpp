#include "hycd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

namespace hycd {

void SceneSpec::validate() const {
    if (width == 0 || height == 0 || bands == 0)
        throw ValidationError("scene dimensions must be positive");
    if (n_materials < 1) throw ValidationError("n_materials must be >= 1");
    if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be >= 0");
    if (!(illumination_gain > 0.0)) throw ValidationError("illumination_gain must be > 0");
    if (!std::isfinite(shift_dx) || !std::isfinite(shift_dy))
        throw ValidationError("shift must be finite");
    for (const auto& b : blocks) {
        if (b.w == 0 || b.h == 0) throw ValidationError("change block must have positive size");
        if (static_cast<std::uint64_t>(b.x) + b.w > width ||
            static_cast<std::uint64_t>(b.y) + b.h > height)
            throw ValidationError("change block exceeds scene bounds");
        if (b.mode == ChangeBlock::Mode::MaterialSwap && n_materials < 2)
            throw ValidationError("material-swap blocks need n_materials >= 2");
    }
}

namespace {

struct GaussGen {
    std::mt19937_64& rng;
    bool has_spare = false;
    double spare = 0.0;

    explicit GaussGen(std::mt19937_64& r) : rng(r) {}

    double unit() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

    double next() {
        if (has_spare) {
            has_spare = false;
            return spare;
        }
        double u1 = unit();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare = r * std::sin(a);
        has_spare = true;
        return r * std::cos(a);
    }
};

// smooth curve over `count` samples: cosine interpolation between a few
// uniform control points in [lo, hi]
std::vector<double> smooth_curve(std::mt19937_64& rng, std::uint32_t count, double lo, double hi) {
    auto unit = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    constexpr int kControls = 6;
    double controls[kControls];
    for (int i = 0; i < kControls; ++i) controls[i] = lo + (hi - lo) * unit();

    std::vector<double> out(count);
    for (std::uint32_t k = 0; k < count; ++k) {
        const double t = count > 1
                             ? static_cast<double>(k) / (count - 1) * (kControls - 1)
                             : 0.0;
        int i = static_cast<int>(t);
        if (i >= kControls - 1) i = kControls - 2;
        const double f = t - i;
        const double s = 0.5 * (1.0 - std::cos(3.14159265358979323846 * f));
        out[k] = controls[i] * (1.0 - s) + controls[i + 1] * s;
    }
    return out;
}

// bilinear sample with edge clamping, so translated scenes have no seam
double sample_clamped(const std::vector<double>& plane, std::uint32_t w, std::uint32_t h,
                      double sx, double sy) {
    sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    const std::uint32_t x0 = static_cast<std::uint32_t>(sx);
    const std::uint32_t y0 = static_cast<std::uint32_t>(sy);
    const std::uint32_t x1 = std::min(x0 + 1, w - 1);
    const std::uint32_t y1 = std::min(y0 + 1, h - 1);
    const double fx = sx - x0;
    const double fy = sy - y0;
    const double top = plane[static_cast<std::size_t>(y0) * w + x0] * (1.0 - fx) +
                       plane[static_cast<std::size_t>(y0) * w + x1] * fx;
    const double bot = plane[static_cast<std::size_t>(y1) * w + x0] * (1.0 - fx) +
                       plane[static_cast<std::size_t>(y1) * w + x1] * fx;
    return top * (1.0 - fy) + bot * fy;
}

} // namespace

ScenePair generate_pair(const SceneSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    auto unit = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

    const std::uint32_t w = spec.width, h = spec.height, bands = spec.bands;
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    const std::size_t materials = static_cast<std::size_t>(spec.n_materials);

    // Voronoi material map from seeded sites, ties to the lowest site index
    std::vector<double> site_x(materials), site_y(materials);
    for (std::size_t m = 0; m < materials; ++m) {
        site_x[m] = unit() * w;
        site_y[m] = unit() * h;
    }
    std::vector<std::uint16_t> material(plane);
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x) {
            std::size_t best = 0;
            double best_d = 0.0;
            for (std::size_t m = 0; m < materials; ++m) {
                const double dx = x - site_x[m], dy = y - site_y[m];
                const double d = dx * dx + dy * dy;
                if (m == 0 || d < best_d) {
                    best_d = d;
                    best = m;
                }
            }
            material[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint16_t>(best);
        }

    // per-material smooth spectra plus the spectral-shift offset curve
    std::vector<std::vector<double>> spectra(materials);
    for (std::size_t m = 0; m < materials; ++m) spectra[m] = smooth_curve(rng, bands, 0.2, 1.0);
    const std::vector<double> offset = smooth_curve(rng, bands, 0.15, 0.45);

    // ground truth and the changed material/offset layout
    ChangeMap truth(w, h);
    truth.method_tag = "ground_truth";
    std::vector<std::uint8_t> shifted(plane, 0);
    std::vector<std::uint16_t> changed_material = material;
    for (const auto& b : spec.blocks) {
        for (std::uint32_t y = b.y; y < b.y + b.h; ++y)
            for (std::uint32_t x = b.x; x < b.x + b.w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                truth.mask[i] = 1;
                if (b.mode == ChangeBlock::Mode::MaterialSwap)
                    changed_material[i] = static_cast<std::uint16_t>(
                        (changed_material[i] + 1) % materials);
                else
                    shifted[i] = 1;
            }
    }

    RasterImage before(w, h, bands);
    RasterImage after(w, h, bands);
    std::vector<float> wl(bands);
    for (std::uint32_t k = 0; k < bands; ++k)
        wl[k] = bands > 1
                    ? static_cast<float>(400.0 + (2505.0 - 400.0) * k / (bands - 1))
                    : 400.0f;
    before.wavelengths_nm = wl;
    after.wavelengths_nm = wl;

    GaussGen gauss(rng);
    std::vector<double> changed_plane(plane);
    for (std::uint32_t k = 0; k < bands; ++k) {
        float* bp = before.plane(k);
        for (std::size_t i = 0; i < plane; ++i) {
            const double base = spectra[material[i]][k];
            bp[i] = static_cast<float>(base + spec.noise_sigma * gauss.next());
            changed_plane[i] = spectra[changed_material[i]][k] + (shifted[i] ? offset[k] : 0.0);
        }
        float* ap = after.plane(k);
        for (std::uint32_t y = 0; y < h; ++y)
            for (std::uint32_t x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const double content = sample_clamped(changed_plane, w, h,
                                                      x - spec.shift_dx, y - spec.shift_dy);
                ap[i] = static_cast<float>(spec.illumination_gain * content +
                                           spec.noise_sigma * gauss.next());
            }
    }

    return {std::move(before), std::move(after), std::move(truth)};
}

DetectionMetrics evaluate(const ChangeMap& pred, const ChangeMap& truth) {
    if (pred.width != truth.width || pred.height != truth.height)
        throw ShapeError("prediction and truth masks must share dimensions");

    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.mask.size(); ++i) {
        const bool p = pred.mask[i] != 0;
        const bool t = truth.mask[i] != 0;
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
    }

    DetectionMetrics m;
    m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
    m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    const std::uint64_t uni = tp + fp + fn;
    m.iou = uni > 0 ? static_cast<double>(tp) / static_cast<double>(uni) : 1.0;
    const std::uint64_t denom = pred.valid_pixels > 0
                                    ? pred.valid_pixels
                                    : static_cast<std::uint64_t>(pred.width) * pred.height;
    m.changed_percent = 100.0 * static_cast<double>(tp + fp) / static_cast<double>(denom);
    return m;
}

SceneSpec scene_spec_from_text(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("unparseable scene spec: ") + e.what());
    }
    try {
        SceneSpec spec;
        spec.width = j.at("width").get<std::uint32_t>();
        spec.height = j.at("height").get<std::uint32_t>();
        spec.bands = j.at("bands").get<std::uint32_t>();
        spec.n_materials = j.value("n_materials", 5);
        spec.noise_sigma = j.value("noise_sigma", 0.0);
        spec.illumination_gain = j.value("illumination_gain", 1.0);
        if (j.contains("shift")) {
            if (!j["shift"].is_array() || j["shift"].size() != 2)
                throw ConfigError("scene spec: shift must be [dx, dy]");
            spec.shift_dx = j["shift"][0].get<double>();
            spec.shift_dy = j["shift"][1].get<double>();
        }
        spec.seed = j.value("seed", 0ull);
        if (j.contains("change_blocks")) {
            for (const auto& bj : j["change_blocks"]) {
                ChangeBlock b;
                b.x = bj.at("x").get<std::uint32_t>();
                b.y = bj.at("y").get<std::uint32_t>();
                b.w = bj.at("w").get<std::uint32_t>();
                b.h = bj.at("h").get<std::uint32_t>();
                const std::string mode = bj.value("mode", "material-swap");
                if (mode == "material-swap") b.mode = ChangeBlock::Mode::MaterialSwap;
                else if (mode == "spectral-shift") b.mode = ChangeBlock::Mode::SpectralShift;
                else throw ConfigError("scene spec: unknown change block mode '" + mode + "'");
                spec.blocks.push_back(b);
            }
        }
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid scene spec: ") + e.what());
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("invalid scene spec: ") + e.what());
    }
}

SceneSpec scene_spec_from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open scene spec: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return scene_spec_from_text(text);
}

} // namespace hycd
