// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Pass the path to the hycd CLI binary as argv[1] (used by the
// end-to-end determinism criterion).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hycd/coregister.hpp"
#include "hycd/cva.hpp"
#include "hycd/dcva.hpp"
#include "hycd/pipeline.hpp"
#include "hycd/raster.hpp"
#include "hycd/synth.hpp"
#include "hycd/threshold.hpp"

using namespace hycd;

namespace {

struct Harness {
    int failures = 0;
    int index = 0;

    void report(const std::string& what, bool ok, double seconds) {
        ++index;
        std::printf("%s  %2d  %s (%.2fs)\n", ok ? "PASS" : "FAIL", index, what.c_str(), seconds);
        std::fflush(stdout);
        if (!ok) ++failures;
    }

    template <typename Fn>
    void criterion(const std::string& what, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        bool ok = false;
        std::string extra;
        try {
            ok = fn(extra);
        } catch (const std::exception& e) {
            extra = std::string("exception: ") + e.what();
            ok = false;
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report(what + (extra.empty() ? "" : " [" + extra + "]"), ok, secs);
    }
};

struct ScratchDir {
    std::filesystem::path path;
    ScratchDir() {
        path = std::filesystem::temp_directory_path() /
               ("hycd_accept_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

RasterImage random_image(std::uint32_t w, std::uint32_t h, std::uint32_t bands,
                         std::uint64_t seed) {
    RasterImage img(w, h, bands);
    std::mt19937_64 rng(seed);
    for (auto& v : img.data) v = static_cast<float>(unit(rng) * 2.0 - 1.0);
    return img;
}

// smooth periodic sinusoid texture; translations evaluate analytically
struct Texture {
    std::uint32_t w, h;
    std::vector<double> amp, fx, fy, ph;
    Texture(std::uint32_t w_, std::uint32_t h_, std::uint64_t seed) : w(w_), h(h_) {
        std::mt19937_64 rng(seed);
        for (int i = 0; i < 8; ++i) {
            amp.push_back(0.3 + 0.7 * unit(rng));
            fx.push_back(1 + static_cast<int>(rng() % 6));
            fy.push_back(1 + static_cast<int>(rng() % 6));
            ph.push_back(6.283185307179586 * unit(rng));
        }
    }
    RasterImage render(double dx, double dy) const {
        RasterImage img(w, h, 1);
        for (std::uint32_t y = 0; y < h; ++y)
            for (std::uint32_t x = 0; x < w; ++x) {
                double s = 0.0;
                for (std::size_t i = 0; i < amp.size(); ++i)
                    s += amp[i] * std::sin(6.283185307179586 *
                                               (fx[i] * (x - dx) / w + fy[i] * (y - dy) / h) +
                                           ph[i]);
                img.at(x, y, 0) = static_cast<float>(s);
            }
        return img;
    }
};

// ---- independent oracles ---------------------------------------------------

float percentile_sort_oracle(std::vector<float> v, double p) {
    std::sort(v.begin(), v.end());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
    rank = std::clamp<std::size_t>(rank, 1, v.size());
    return v[rank - 1];
}

double otsu_exhaustive_oracle(const std::vector<float>& values, int bins) {
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<long long> hist(static_cast<std::size_t>(bins), 0);
    const double scale = static_cast<double>(bins) / (mx - mn);
    for (float v : values) {
        int idx = static_cast<int>((static_cast<double>(v) - mn) * scale);
        idx = std::clamp(idx, 0, bins - 1);
        ++hist[static_cast<std::size_t>(idx)];
    }
    auto gt = [](long long a1, long long b1, long long a2, long long b2) {
        if (b1 <= 0 || a1 == 0) return false;
        if (b2 <= 0 || a2 == 0) return true;
        const auto u1 = static_cast<unsigned long long>(a1 < 0 ? -a1 : a1);
        const auto u2 = static_cast<unsigned long long>(a2 < 0 ? -a2 : a2);
        return static_cast<unsigned __int128>(u1) * u1 * static_cast<unsigned long long>(b2) >
               static_cast<unsigned __int128>(u2) * u2 * static_cast<unsigned long long>(b1);
    };
    int best_t = 0;
    long long best_a = 0, best_b = 0;
    for (int t = 0; t + 1 < bins; ++t) {
        long long n0 = 0, m0 = 0, n1 = 0, m1 = 0;
        for (int i = 0; i <= t; ++i) {
            n0 += hist[static_cast<std::size_t>(i)];
            m0 += hist[static_cast<std::size_t>(i)] * i;
        }
        for (int i = t + 1; i < bins; ++i) {
            n1 += hist[static_cast<std::size_t>(i)];
            m1 += hist[static_cast<std::size_t>(i)] * i;
        }
        if (gt(m0 * n1 - m1 * n0, n0 * n1, best_a, best_b)) {
            best_a = m0 * n1 - m1 * n0;
            best_b = n0 * n1;
            best_t = t;
        }
    }
    return mn + static_cast<double>(best_t + 1) * (mx - mn) / static_cast<double>(bins);
}

std::vector<float> naive_conv3x3_oracle(const std::vector<float>& in, std::uint32_t w,
                                        std::uint32_t h, const ConvLayer& layer) {
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    std::vector<float> out(plane * static_cast<std::size_t>(layer.out_ch));
    for (int co = 0; co < layer.out_ch; ++co)
        for (std::uint32_t y = 0; y < h; ++y)
            for (std::uint32_t x = 0; x < w; ++x) {
                double acc = layer.bias[static_cast<std::size_t>(co)];
                for (int ci = 0; ci < layer.in_ch; ++ci)
                    for (int ky = -1; ky <= 1; ++ky)
                        for (int kx = -1; kx <= 1; ++kx) {
                            const int yy = static_cast<int>(y) + ky;
                            const int xx = static_cast<int>(x) + kx;
                            if (yy < 0 || yy >= static_cast<int>(h) || xx < 0 ||
                                xx >= static_cast<int>(w))
                                continue;
                            acc += static_cast<double>(
                                       layer.weights[(static_cast<std::size_t>(co) * layer.in_ch +
                                                      ci) * 9 +
                                                     static_cast<std::size_t>((ky + 1) * 3 + kx + 1)]) *
                                   in[static_cast<std::size_t>(ci) * plane +
                                      static_cast<std::size_t>(yy) * w + xx];
                        }
                if (layer.relu && acc < 0.0) acc = 0.0;
                out[static_cast<std::size_t>(co) * plane + static_cast<std::size_t>(y) * w + x] =
                    static_cast<float>(acc);
            }
    return out;
}

// detection scene for criterion 8: 32x32 material swap, noise calibrated so
// the mean per-band swap contrast is exactly 5 sigma
ScenePair calibrated_detection_scene() {
    SceneSpec probe;
    probe.width = 128;
    probe.height = 128;
    probe.bands = 4;
    probe.n_materials = 3;
    probe.seed = 404;
    probe.blocks.push_back({48, 48, 32, 32, ChangeBlock::Mode::MaterialSwap});
    const ScenePair clean = generate_pair(probe);
    double contrast = 0.0;
    std::size_t n = 0;
    for (std::uint32_t k = 0; k < probe.bands; ++k)
        for (std::size_t i = 0; i < clean.truth.mask.size(); ++i)
            if (clean.truth.mask[i]) {
                contrast += std::fabs(static_cast<double>(clean.after.plane(k)[i]) -
                                      clean.before.plane(k)[i]);
                ++n;
            }
    SceneSpec spec = probe;
    spec.noise_sigma = contrast / static_cast<double>(n) / 5.0;
    return generate_pair(spec);
}

std::string slurp_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<BatchItem> benchmark_batch_items(const ScratchDir& dir) {
    std::vector<BatchItem> items;
    for (int s = 0; s < 3; ++s) {
        SceneSpec spec;
        spec.width = 128;
        spec.height = 128;
        spec.bands = 4;
        spec.n_materials = 3;
        spec.noise_sigma = 0.02;
        spec.seed = 900 + static_cast<unsigned>(s);
        spec.blocks.push_back({32, 32, 24, 24, ChangeBlock::Mode::MaterialSwap});
        spec.blocks.push_back({80, 70, 16, 16, ChangeBlock::Mode::SpectralShift});
        const ScenePair pair = generate_pair(spec);
        const std::string tag = "scene" + std::to_string(s);
        write_raster(pair.before, dir.file(tag + "_before.bin"));
        write_raster(pair.after, dir.file(tag + "_after.bin"));

        auto base = [&](const std::string& method_tag) {
            PipelineConfig c;
            c.before_path = dir.file(tag + "_before.bin");
            c.after_path = dir.file(tag + "_after.bin");
            c.location = tag;
            c.out_prefix = dir.file(tag + "_" + method_tag);
            c.seed = 7;
            return c;
        };
        PipelineConfig c2va = base("c2va");
        items.push_back({tag + "_c2va", c2va});
        PipelineConfig otsu = base("otsu");
        otsu.method = PipelineConfig::Method::DcvaOtsu;
        otsu.layers = LayerSelection::preset(2);
        items.push_back({tag + "_otsu", otsu});
        for (int p = 1; p <= 3; ++p) {
            PipelineConfig ada = base("ada" + std::to_string(p));
            ada.method = PipelineConfig::Method::DcvaAda;
            ada.layers = LayerSelection::preset(p);
            ada.threshold.adaptive_window_radius = 64;
            ada.threshold.adaptive_k = 2.0;
            items.push_back({tag + "_ada" + std::to_string(p), ada});
        }
    }
    return items;
}

} // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";
    Harness h;

    h.criterion("c2va p90 marks exactly 10% of valid pixels on 20 random 256x256x32 scenes, < 5s",
                [&](std::string& extra) {
                    const auto t0 = std::chrono::steady_clock::now();
                    bool ok = true;
                    for (int s = 0; s < 20 && ok; ++s) {
                        const RasterImage before =
                            random_image(256, 256, 32, 1000 + static_cast<unsigned>(s));
                        const RasterImage after =
                            random_image(256, 256, 32, 2000 + static_cast<unsigned>(s));
                        const C2vaResult res = c2va_change_map(before, after, 90.0);
                        const double marked = static_cast<double>(res.mask.changed_count());
                        const double target = 0.10 * 256.0 * 256.0;
                        if (std::fabs(marked - target) > 1.0) {
                            extra = "scene " + std::to_string(s) + " marked " +
                                    std::to_string(marked);
                            ok = false;
                        }
                    }
                    const double secs = std::chrono::duration<double>(
                                            std::chrono::steady_clock::now() - t0)
                                            .count();
                    if (secs >= 5.0) {
                        extra = "took " + std::to_string(secs) + "s";
                        ok = false;
                    }
                    return ok;
                });

    h.criterion("magnitude matches a double-precision naive loop on 16x16x240 pairs (1e-4 rel)",
                [&](std::string& extra) {
                    for (int trial = 0; trial < 5; ++trial) {
                        const RasterImage before =
                            random_image(16, 16, 240, 3000 + static_cast<unsigned>(trial));
                        const RasterImage after =
                            random_image(16, 16, 240, 4000 + static_cast<unsigned>(trial));
                        const ScalarMap rho = change_magnitude(before, after);
                        const std::size_t plane = before.plane_size();
                        for (std::size_t p = 0; p < plane; ++p) {
                            double sq = 0.0;
                            for (std::uint32_t k = 0; k < 240; ++k) {
                                const double d =
                                    static_cast<double>(after.data[k * plane + p]) -
                                    static_cast<double>(before.data[k * plane + p]);
                                sq += d * d;
                            }
                            const double expect = std::sqrt(sq);
                            if (std::fabs(rho.values[p] - expect) >
                                1e-4 * std::max(1.0, expect)) {
                                extra = "pixel " + std::to_string(p);
                                return false;
                            }
                        }
                    }
                    return true;
                });

    h.criterion("phase angle hits 0, pi/2, pi on parallel/orthogonal/anti-parallel diffs (1e-6)",
                [&](std::string& extra) {
                    const ReferenceVector ref = default_reference(2);
                    RasterImage zero(1, 1, 2);
                    auto angle_of = [&](float d0, float d1) {
                        RasterImage after(1, 1, 2);
                        after.data = {d0, d1};
                        return static_cast<double>(phase_angle(zero, after, ref).values[0]);
                    };
                    const double pi = 3.14159265358979323846;
                    if (std::fabs(angle_of(1.0f, 1.0f) - 0.0) > 1e-6) {
                        extra = "parallel";
                        return false;
                    }
                    if (std::fabs(angle_of(1.0f, -1.0f) - pi / 2) > 1e-6) {
                        extra = "orthogonal";
                        return false;
                    }
                    if (std::fabs(angle_of(-1.0f, -1.0f) - pi) > 1e-6) {
                        extra = "anti-parallel";
                        return false;
                    }
                    return true;
                });

    h.criterion("registration recovers (2,3) and (0.5,0) within 0.25 px interior mean, < 10s",
                [&](std::string& extra) {
                    const auto t0 = std::chrono::steady_clock::now();
                    const Texture tex(128, 128, 42);
                    const RasterImage target = tex.render(0.0, 0.0);

                    auto interior_epe = [&](const FlowField& flow, double dx, double dy) {
                        double sum = 0.0;
                        std::size_t n = 0;
                        for (std::uint32_t y = 16; y + 16 < 128; ++y)
                            for (std::uint32_t x = 16; x + 16 < 128; ++x) {
                                const std::size_t i = static_cast<std::size_t>(y) * 128 + x;
                                const double eu = flow.u[i] - dx, ev = flow.v[i] - dy;
                                sum += std::sqrt(eu * eu + ev * ev);
                                ++n;
                            }
                        return sum / static_cast<double>(n);
                    };

                    const FlowField f1 =
                        compute_flow(target, tex.render(2.0, 3.0), FlowParams{});
                    const double epe1 = interior_epe(f1, 2.0, 3.0);
                    if (epe1 > 0.25) {
                        extra = "integer epe " + std::to_string(epe1);
                        return false;
                    }
                    const FlowField f2 =
                        compute_flow(target, tex.render(0.5, 0.0), FlowParams{});
                    const double epe2 = interior_epe(f2, 0.5, 0.0);
                    if (epe2 > 0.25) {
                        extra = "subpixel epe " + std::to_string(epe2);
                        return false;
                    }
                    const double secs = std::chrono::duration<double>(
                                            std::chrono::steady_clock::now() - t0)
                                            .count();
                    if (secs >= 10.0) {
                        extra = "took " + std::to_string(secs) + "s";
                        return false;
                    }
                    return true;
                });

    h.criterion("otsu equals exhaustive between-class-variance maximization on 100 random sets",
                [&](std::string& extra) {
                    std::mt19937_64 rng(77);
                    for (int trial = 0; trial < 100; ++trial) {
                        const std::size_t n = 2 + rng() % 10000;
                        std::vector<float> v(n);
                        const bool quantized = trial % 4 == 0;
                        for (auto& x : v)
                            x = quantized
                                    ? static_cast<float>(static_cast<int>(rng() % 20))
                                    : static_cast<float>(unit(rng) * 200.0 - 100.0);
                        const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
                        if (!(*mx > *mn)) v.back() += 1.0f;
                        const int bins = trial % 2 ? 128 : 256;
                        const double got = otsu_threshold_values(v, bins);
                        const double want = otsu_exhaustive_oracle(v, bins);
                        if (got != want) {
                            extra = "trial " + std::to_string(trial) + ": " +
                                    std::to_string(got) + " vs " + std::to_string(want);
                            return false;
                        }
                    }
                    return true;
                });

    h.criterion("nearest-rank percentile equals the full-sort oracle on 100 random sets",
                [&](std::string& extra) {
                    std::mt19937_64 rng(88);
                    for (int trial = 0; trial < 100; ++trial) {
                        const std::size_t n = 1 + rng() % 3000;
                        std::vector<float> v(n);
                        for (auto& x : v)
                            x = static_cast<float>(static_cast<int>(rng() % 64)) * 0.5f;
                        const double p = 0.5 + 99.0 * unit(rng);
                        ScalarMap m(static_cast<std::uint32_t>(n), 1, ScalarKind::Magnitude);
                        m.values = v;
                        if (percentile_threshold(m, p) !=
                            static_cast<double>(percentile_sort_oracle(v, p))) {
                            extra = "trial " + std::to_string(trial);
                            return false;
                        }
                    }
                    return true;
                });

    h.criterion("dcva soundness: identical pair -> zero norm + empty mask; swap -> identical mask",
                [&](std::string& extra) {
                    const FeatureExtractor ext = builtin_extractor(7, 4);
                    SelectionParams sel;
                    ThresholdSpec ada;
                    ada.method = ThresholdSpec::Method::Adaptive;
                    ada.adaptive_window_radius = 64;
                    ada.adaptive_k = 2.0;

                    const RasterImage img = random_image(64, 64, 4, 5000);
                    const DcvaResult same =
                        dcva_change_map(img, img, ext, LayerSelection::preset(1), sel, ada);
                    for (float v : same.norm.values)
                        if (v != 0.0f) {
                            extra = "nonzero norm on identical pair";
                            return false;
                        }
                    if (same.mask.changed_count() != 0) {
                        extra = "non-empty mask on identical pair";
                        return false;
                    }

                    const ScenePair scene = calibrated_detection_scene();
                    const DcvaResult fwd = dcva_change_map(scene.before, scene.after, ext,
                                                           LayerSelection::preset(1), sel, ada);
                    const DcvaResult rev = dcva_change_map(scene.after, scene.before, ext,
                                                           LayerSelection::preset(1), sel, ada);
                    if (fwd.mask.mask != rev.mask.mask) {
                        extra = "swap changed the mask";
                        return false;
                    }
                    return true;
                });

    h.criterion("detection: dcva-ada [2,5] recall >= 0.8, background FP <= 5%; c2va IoU >= 0.5",
                [&](std::string& extra) {
                    const ScenePair scene = calibrated_detection_scene();
                    const FeatureExtractor ext = builtin_extractor(7, 4);
                    SelectionParams sel;
                    ThresholdSpec ada;
                    ada.method = ThresholdSpec::Method::Adaptive;
                    ada.adaptive_window_radius = 64;
                    ada.adaptive_k = 2.0;

                    const DcvaResult res = dcva_change_map(scene.before, scene.after, ext,
                                                           LayerSelection::preset(1), sel, ada);
                    const DetectionMetrics dm = evaluate(res.mask, scene.truth);
                    std::uint64_t bg_fp = 0, bg = 0;
                    for (std::size_t i = 0; i < res.mask.mask.size(); ++i)
                        if (!scene.truth.mask[i]) {
                            ++bg;
                            bg_fp += res.mask.mask[i];
                        }
                    const double fpr = static_cast<double>(bg_fp) / static_cast<double>(bg);
                    if (dm.recall < 0.8) {
                        extra = "dcva recall " + std::to_string(dm.recall);
                        return false;
                    }
                    if (fpr > 0.05) {
                        extra = "dcva fpr " + std::to_string(fpr);
                        return false;
                    }

                    const C2vaResult cv = c2va_change_map(scene.before, scene.after, 90.0);
                    const DetectionMetrics cm = evaluate(cv.mask, scene.truth);
                    if (cm.iou < 0.5) {
                        extra = "c2va iou " + std::to_string(cm.iou);
                        return false;
                    }
                    extra = "recall " + std::to_string(dm.recall).substr(0, 5) + ", fpr " +
                            std::to_string(fpr).substr(0, 6) + ", iou " +
                            std::to_string(cm.iou).substr(0, 5);
                    return true;
                });

    h.criterion("layer presets (1)(2)(3) x 3 scenes emit a finite, deterministic table",
                [&](std::string& extra) {
                    ScratchDir dir;
                    const auto items = benchmark_batch_items(dir);
                    const std::string csv1 = run_batch(items, dir.file("t1.csv"));
                    const std::string csv2 = run_batch(items, dir.file("t2.csv"));
                    if (csv1 != csv2) {
                        extra = "rerun differs";
                        return false;
                    }
                    std::istringstream lines(csv1);
                    std::string line;
                    std::getline(lines, line); // header
                    int rows = 0;
                    while (std::getline(lines, line)) {
                        ++rows;
                        if (line.find("[") != std::string::npos) {
                            extra = "error row: " + line;
                            return false;
                        }
                        // changed_percent column parses as a finite number
                        std::istringstream fields(line);
                        std::string loc, method, layers, changed;
                        std::getline(fields, loc, ',');
                        std::getline(fields, method, ',');
                        std::getline(fields, layers, ',');
                        std::getline(fields, changed, ',');
                        const double value = std::atof(changed.c_str());
                        if (!std::isfinite(value) || changed.empty()) {
                            extra = "bad changed_percent in: " + line;
                            return false;
                        }
                    }
                    if (rows != 15) {
                        extra = std::to_string(rows) + " rows, expected 15";
                        return false;
                    }
                    return true;
                });

    h.criterion("every builtin conv layer matches the naive quadruple-loop on a 16x16 fixture",
                [&](std::string& extra) {
                    const FeatureExtractor ext = builtin_extractor(11, 4);
                    const RasterImage img = random_image(16, 16, 4, 6000);
                    LayerSelection all_convs;
                    for (std::size_t i = 0; i < ext.layers.size(); ++i)
                        if (ext.layers[i].kind == LayerOp::Kind::Conv3x3)
                            all_convs.indices.push_back(static_cast<int>(i + 1));
                    const auto got = forward_activations(ext, img, all_convs);

                    std::vector<float> cur = img.data;
                    std::uint32_t w = 16, hh = 16;
                    int ch = 4;
                    std::size_t next = 0;
                    for (std::size_t l = 1; l <= ext.layers.size(); ++l) {
                        const LayerOp& op = ext.layers[l - 1];
                        if (op.kind == LayerOp::Kind::Conv3x3) {
                            cur = naive_conv3x3_oracle(cur, w, hh, op.conv);
                            ch = op.conv.out_ch;
                        } else if (op.kind == LayerOp::Kind::Downsample2x) {
                            std::vector<float> down(static_cast<std::size_t>(w / 2) * (hh / 2) *
                                                    static_cast<std::size_t>(ch));
                            for (int c = 0; c < ch; ++c)
                                for (std::uint32_t y = 0; y < hh / 2; ++y)
                                    for (std::uint32_t x = 0; x < w / 2; ++x) {
                                        const std::size_t base =
                                            static_cast<std::size_t>(c) * w * hh;
                                        down[static_cast<std::size_t>(c) * (w / 2) * (hh / 2) +
                                             static_cast<std::size_t>(y) * (w / 2) + x] =
                                            0.25f *
                                            (cur[base + static_cast<std::size_t>(2 * y) * w + 2 * x] +
                                             cur[base + static_cast<std::size_t>(2 * y) * w + 2 * x + 1] +
                                             cur[base + static_cast<std::size_t>(2 * y + 1) * w + 2 * x] +
                                             cur[base + static_cast<std::size_t>(2 * y + 1) * w + 2 * x + 1]);
                                    }
                            cur = std::move(down);
                            w /= 2;
                            hh /= 2;
                        }
                        if (next < all_convs.indices.size() &&
                            all_convs.indices[next] == static_cast<int>(l)) {
                            const FeatureStack& stack = got[next];
                            if (stack.values.size() != cur.size()) {
                                extra = "size mismatch at layer " + std::to_string(l);
                                return false;
                            }
                            for (std::size_t i = 0; i < cur.size(); ++i)
                                if (std::fabs(stack.values[i] - cur[i]) >
                                    1e-4 * std::max(1.0f, std::fabs(cur[i]))) {
                                    extra = "layer " + std::to_string(l) + " index " +
                                            std::to_string(i);
                                    return false;
                                }
                            ++next;
                        }
                    }
                    return next == all_convs.indices.size();
                });

    h.criterion("hycd batch rerun is byte-identical (CSV and PGM outputs)",
                [&](std::string& extra) {
                    if (cli.empty()) {
                        extra = "no CLI path given";
                        return false;
                    }
                    ScratchDir dir;
                    // synthesize two scenes through the CLI
                    for (int s = 0; s < 2; ++s) {
                        std::ofstream spec(dir.file("scene" + std::to_string(s) + ".spec.json"));
                        spec << R"({"width":128,"height":128,"bands":4,"n_materials":3,)"
                             << R"("noise_sigma":0.02,"seed":)" << 300 + s
                             << R"(,"change_blocks":[{"x":40,"y":40,"w":24,"h":24,)"
                             << R"("mode":"material-swap"}]})";
                        spec.close();
                        const std::string cmd =
                            cli + " synth --spec " + dir.file("scene" + std::to_string(s) + ".spec.json") +
                            " --out-prefix " + dir.file("s" + std::to_string(s) + "_") +
                            " >/dev/null 2>&1";
                        if (std::system(cmd.c_str()) != 0) {
                            extra = "synth failed";
                            return false;
                        }
                    }
                    // four configs: c2va + dcva variants per scene
                    std::filesystem::create_directories(dir.file("configs"));
                    int idx = 0;
                    for (int s = 0; s < 2; ++s)
                        for (const std::string method : {"c2va", "dcva_ada"}) {
                            std::ofstream cfg(dir.file("configs/c" + std::to_string(idx) + ".json"));
                            cfg << "{\"before\":\"" << dir.file("s" + std::to_string(s) + "_before.bin")
                                << "\",\"after\":\"" << dir.file("s" + std::to_string(s) + "_after.bin")
                                << "\",\"method\":\"" << method
                                << "\",\"layers\":\"preset1\",\"seed\":7,"
                                << "\"threshold\":{\"radius\":64,\"k\":2.0},"
                                << "\"out_prefix\":\"" << dir.file("out_c" + std::to_string(idx))
                                << "\"}";
                            ++idx;
                        }
                    auto run_once = [&](const std::string& out_csv) {
                        const std::string cmd = cli + " batch --configs " + dir.file("configs") +
                                                " --out " + out_csv + " >/dev/null 2>&1";
                        return std::system(cmd.c_str()) == 0;
                    };
                    if (!run_once(dir.file("run1.csv"))) {
                        extra = "first batch failed";
                        return false;
                    }
                    std::vector<std::string> masks1;
                    for (int i = 0; i < idx; ++i)
                        masks1.push_back(slurp_file(dir.file("out_c" + std::to_string(i) + "_mask.pgm")));
                    if (!run_once(dir.file("run2.csv"))) {
                        extra = "second batch failed";
                        return false;
                    }
                    if (slurp_file(dir.file("run1.csv")) != slurp_file(dir.file("run2.csv"))) {
                        extra = "CSV differs between reruns";
                        return false;
                    }
                    for (int i = 0; i < idx; ++i)
                        if (masks1[static_cast<std::size_t>(i)] !=
                            slurp_file(dir.file("out_c" + std::to_string(i) + "_mask.pgm"))) {
                            extra = "mask " + std::to_string(i) + " differs between reruns";
                            return false;
                        }
                    return true;
                });

    std::printf("%d/%d criteria passed\n", h.index - h.failures, h.index);
    return h.failures;
}
