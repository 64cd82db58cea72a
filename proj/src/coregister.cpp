#include "hycd/coregister.hpp"

#include <algorithm>
#include <cmath>

namespace hycd {

float FlowField::max_abs() const {
    float m = 0.0f;
    for (float x : u) m = std::max(m, std::fabs(x));
    for (float x : v) m = std::max(m, std::fabs(x));
    return m;
}

void FlowParams::validate() const {
    if (pyramid_levels < 1) throw ValidationError("pyramid_levels must be >= 1");
    if (window_radius < 1) throw ValidationError("window_radius must be >= 1");
    if (iterations_per_level < 1) throw ValidationError("iterations_per_level must be >= 1");
    if (!(regularization_eps > 0.0)) throw ValidationError("regularization_eps must be > 0");
}

namespace {

struct Plane {
    std::uint32_t w = 0, h = 0;
    std::vector<double> v;

    Plane() = default;
    Plane(std::uint32_t w_, std::uint32_t h_) : w(w_), h(h_), v(static_cast<std::size_t>(w_) * h_, 0.0) {}

    double at(std::uint32_t x, std::uint32_t y) const { return v[static_cast<std::size_t>(y) * w + x]; }
    double& at(std::uint32_t x, std::uint32_t y) { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane to_plane(const RasterImage& img) {
    Plane p(img.width, img.height);
    const float* src = img.plane(0);
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = static_cast<double>(src[i]);
    return p;
}

// 2x box downsample; odd trailing row/column averages the available pixels
Plane downsample2(const Plane& p) {
    Plane out((p.w + 1) / 2, (p.h + 1) / 2);
    for (std::uint32_t y = 0; y < out.h; ++y) {
        const std::uint32_t y0 = 2 * y, y1 = std::min(2 * y + 1, p.h - 1);
        for (std::uint32_t x = 0; x < out.w; ++x) {
            const std::uint32_t x0 = 2 * x, x1 = std::min(2 * x + 1, p.w - 1);
            out.at(x, y) = 0.25 * (p.at(x0, y0) + p.at(x1, y0) + p.at(x0, y1) + p.at(x1, y1));
        }
    }
    return out;
}

double sample_clamped(const Plane& p, double sx, double sy) {
    sx = std::clamp(sx, 0.0, static_cast<double>(p.w - 1));
    sy = std::clamp(sy, 0.0, static_cast<double>(p.h - 1));
    const std::uint32_t x0 = static_cast<std::uint32_t>(sx);
    const std::uint32_t y0 = static_cast<std::uint32_t>(sy);
    const std::uint32_t x1 = std::min(x0 + 1, p.w - 1);
    const std::uint32_t y1 = std::min(y0 + 1, p.h - 1);
    const double fx = sx - x0, fy = sy - y0;
    const double top = p.at(x0, y0) * (1.0 - fx) + p.at(x1, y0) * fx;
    const double bot = p.at(x0, y1) * (1.0 - fx) + p.at(x1, y1) * fx;
    return top * (1.0 - fy) + bot * fy;
}

// clamped-window box sum via a summed-area table
Plane box_sum(const Plane& src, int radius) {
    const std::uint32_t w = src.w, h = src.h;
    const std::size_t sw = w + 1;
    std::vector<double> sat(sw * (h + 1), 0.0);
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x) {
            const std::size_t t = (static_cast<std::size_t>(y) + 1) * sw + x + 1;
            sat[t] = src.at(x, y) + sat[t - 1] + sat[t - sw] - sat[t - sw - 1];
        }
    Plane out(w, h);
    const std::uint32_t r = static_cast<std::uint32_t>(radius);
    for (std::uint32_t y = 0; y < h; ++y) {
        const std::uint32_t y0 = y > r ? y - r : 0;
        const std::uint32_t y1 = std::min(h - 1, y + r);
        for (std::uint32_t x = 0; x < w; ++x) {
            const std::uint32_t x0 = x > r ? x - r : 0;
            const std::uint32_t x1 = std::min(w - 1, x + r);
            const std::size_t a = static_cast<std::size_t>(y0) * sw + x0;
            const std::size_t b = static_cast<std::size_t>(y0) * sw + x1 + 1;
            const std::size_t c = static_cast<std::size_t>(y1 + 1) * sw + x0;
            const std::size_t d = static_cast<std::size_t>(y1 + 1) * sw + x1 + 1;
            out.at(x, y) = sat[d] - sat[b] - sat[c] + sat[a];
        }
    }
    return out;
}

Plane upsample_to(const Plane& p, std::uint32_t w, std::uint32_t h, double gain) {
    Plane out(w, h);
    const double sx_scale = static_cast<double>(p.w) / w;
    const double sy_scale = static_cast<double>(p.h) / h;
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x)
            out.at(x, y) = gain * sample_clamped(p, (x + 0.5) * sx_scale - 0.5, (y + 0.5) * sy_scale - 0.5);
    return out;
}


// Normalized-convolution smoothing: flow averaged over the window with
// per-pixel confidence, so textureless or outlier regions inherit the flow
// of nearby well-constrained pixels instead of keeping noise.
void box_smooth(Plane& p, const Plane& confidence, int radius) {
    Plane weighted(p.w, p.h);
    for (std::size_t i = 0; i < p.v.size(); ++i) weighted.v[i] = p.v[i] * confidence.v[i];
    const Plane num = box_sum(weighted, radius);
    const Plane den = box_sum(confidence, radius);
    for (std::size_t i = 0; i < p.v.size(); ++i)
        p.v[i] = num.v[i] / (den.v[i] + 1e-9);
}

// one Lucas-Kanade pass: warp, gradients, windowed normal equations
void lk_iterate(const Plane& target, const Plane& moving, Plane& u, Plane& v,
                const FlowParams& params) {
    const std::uint32_t w = target.w, h = target.h;

    Plane warped(w, h);
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x)
            warped.at(x, y) = sample_clamped(moving, x + u.at(x, y), y + v.at(x, y));

    Plane err(w, h);
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x)
            err.at(x, y) = warped.at(x, y) - target.at(x, y);

    // Cauchy weights scaled by the upper residual quantile: pixels whose
    // content genuinely changed between the acquisitions would otherwise
    // hijack the window solves around them, while ordinary misalignment
    // residuals (the signal) must keep their weight
    std::vector<double> abs_err(err.v.size());
    for (std::size_t i = 0; i < err.v.size(); ++i) abs_err[i] = std::fabs(err.v[i]);
    const std::size_t q90 = abs_err.size() * 9 / 10;
    std::nth_element(abs_err.begin(), abs_err.begin() + q90, abs_err.end());
    const double scale = 3.0 * abs_err[q90] + 1e-12;

    Plane gxx(w, h), gxy(w, h), gyy(w, h), gxe(w, h), gye(w, h);
    for (std::uint32_t y = 0; y < h; ++y) {
        const std::uint32_t ym = y > 0 ? y - 1 : 0, yp = std::min(y + 1, h - 1);
        for (std::uint32_t x = 0; x < w; ++x) {
            const std::uint32_t xm = x > 0 ? x - 1 : 0, xp = std::min(x + 1, w - 1);
            const double dx = 0.5 * (warped.at(xp, y) - warped.at(xm, y));
            const double dy = 0.5 * (warped.at(x, yp) - warped.at(x, ym));
            const double e = err.at(x, y);
            const double rel = e / scale;
            const double wgt = 1.0 / (1.0 + rel * rel);
            gxx.at(x, y) = wgt * dx * dx;
            gxy.at(x, y) = wgt * dx * dy;
            gyy.at(x, y) = wgt * dy * dy;
            gxe.at(x, y) = wgt * dx * e;
            gye.at(x, y) = wgt * dy * e;
        }
    }

    const int r = params.window_radius;
    const Plane sxx = box_sum(gxx, r), sxy = box_sum(gxy, r), syy = box_sum(gyy, r);
    const Plane sxe = box_sum(gxe, r), sye = box_sum(gye, r);

    const double eps = params.regularization_eps;
    const double cap = 2.0; // incremental solves are only valid near the linearization point
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x) {
            const double a = sxx.at(x, y) + eps;
            const double b = sxy.at(x, y);
            const double c = syy.at(x, y) + eps;
            const double det = a * c - b * b; // > 0 by Cauchy-Schwarz + eps
            double du = (b * sye.at(x, y) - c * sxe.at(x, y)) / det;
            double dv = (b * sxe.at(x, y) - a * sye.at(x, y)) / det;
            du = std::clamp(du, -cap, cap);
            dv = std::clamp(dv, -cap, cap);
            u.at(x, y) += du;
            v.at(x, y) += dv;
        }
    Plane confidence(w, h);
    for (std::size_t i = 0; i < confidence.v.size(); ++i)
        confidence.v[i] = sxx.v[i] + syy.v[i];
    box_smooth(u, confidence, r);
    box_smooth(v, confidence, r);
}

} // namespace

FlowField compute_flow(const RasterImage& target, const RasterImage& moving,
                       const FlowParams& params) {
    params.validate();
    if (target.bands != 1 || moving.bands != 1)
        throw ShapeError("compute_flow expects single-band images");
    if (target.width != moving.width || target.height != moving.height)
        throw ShapeError("compute_flow inputs must share dimensions");

    int levels = params.pyramid_levels;
    while (levels > 1 &&
           (std::min(target.width, target.height) >> (levels - 1)) < 8)
        --levels;

    std::vector<Plane> tp, mp;
    tp.push_back(to_plane(target));
    mp.push_back(to_plane(moving));
    for (int l = 1; l < levels; ++l) {
        tp.push_back(downsample2(tp.back()));
        mp.push_back(downsample2(mp.back()));
    }

    Plane u(tp.back().w, tp.back().h), v(tp.back().w, tp.back().h);
    for (int l = levels - 1; l >= 0; --l) {
        if (u.w != tp[static_cast<std::size_t>(l)].w || u.h != tp[static_cast<std::size_t>(l)].h) {
            u = upsample_to(u, tp[static_cast<std::size_t>(l)].w, tp[static_cast<std::size_t>(l)].h, 2.0);
            v = upsample_to(v, tp[static_cast<std::size_t>(l)].w, tp[static_cast<std::size_t>(l)].h, 2.0);
        }
        for (int it = 0; it < params.iterations_per_level; ++it)
            lk_iterate(tp[static_cast<std::size_t>(l)], mp[static_cast<std::size_t>(l)], u, v, params);
    }

    FlowField flow(target.width, target.height);
    for (std::size_t i = 0; i < flow.u.size(); ++i) {
        flow.u[i] = static_cast<float>(u.v[i]);
        flow.v[i] = static_cast<float>(v.v[i]);
    }
    return flow;
}

RasterImage warp(const RasterImage& img, const FlowField& flow) {
    if (img.width != flow.width || img.height != flow.height)
        throw ShapeError("flow dimensions must equal image dimensions");

    RasterImage out(img.width, img.height, img.bands);
    out.wavelengths_nm = img.wavelengths_nm;
    out.nodata.assign(out.plane_size(), 0);
    const std::size_t plane = img.plane_size();

    for (std::uint32_t y = 0; y < img.height; ++y) {
        for (std::uint32_t x = 0; x < img.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * img.width + x;
            const double sx = static_cast<double>(x) + flow.u[i];
            const double sy = static_cast<double>(y) + flow.v[i];
            if (!(sx >= 0.0 && sx <= img.width - 1.0 && sy >= 0.0 && sy <= img.height - 1.0)) {
                out.nodata[i] = 1;
                continue;
            }
            const std::uint32_t x0 = static_cast<std::uint32_t>(sx);
            const std::uint32_t y0 = static_cast<std::uint32_t>(sy);
            const std::uint32_t x1 = std::min(x0 + 1, img.width - 1);
            const std::uint32_t y1 = std::min(y0 + 1, img.height - 1);
            const double fx = sx - x0, fy = sy - y0;
            const double w00 = (1.0 - fx) * (1.0 - fy), w10 = fx * (1.0 - fy);
            const double w01 = (1.0 - fx) * fy, w11 = fx * fy;

            if (img.has_nodata_mask()) {
                const bool bad = (w00 > 0.0 && !img.pixel_valid(x0, y0)) ||
                                 (w10 > 0.0 && !img.pixel_valid(x1, y0)) ||
                                 (w01 > 0.0 && !img.pixel_valid(x0, y1)) ||
                                 (w11 > 0.0 && !img.pixel_valid(x1, y1));
                if (bad) {
                    out.nodata[i] = 1;
                    continue;
                }
            }
            for (std::uint32_t k = 0; k < img.bands; ++k) {
                const float* src = img.data.data() + k * plane;
                const double val = w00 * src[static_cast<std::size_t>(y0) * img.width + x0] +
                                   w10 * src[static_cast<std::size_t>(y0) * img.width + x1] +
                                   w01 * src[static_cast<std::size_t>(y1) * img.width + x0] +
                                   w11 * src[static_cast<std::size_t>(y1) * img.width + x1];
                out.data[k * plane + i] = static_cast<float>(val);
            }
        }
    }
    if (std::all_of(out.nodata.begin(), out.nodata.end(), [](std::uint8_t f) { return f == 0; }))
        out.nodata.clear();
    return out;
}

std::pair<RasterImage, FlowField> coregister_pair(const RasterImage& before,
                                                  const RasterImage& after,
                                                  std::uint32_t band_index,
                                                  const FlowParams& params) {
    if (before.width != after.width || before.height != after.height ||
        before.bands != after.bands)
        throw ShapeError("coregister_pair inputs must share dimensions and band count");
    if (band_index >= before.bands)
        throw BoundsError("band index " + std::to_string(band_index) + " out of range (bands = " +
                          std::to_string(before.bands) + ")");

    RasterImage target_band(before.width, before.height, 1);
    RasterImage moving_band(after.width, after.height, 1);
    std::copy_n(before.plane(band_index), before.plane_size(), target_band.plane(0));
    std::copy_n(after.plane(band_index), after.plane_size(), moving_band.plane(0));

    FlowField flow = compute_flow(target_band, moving_band, params);
    RasterImage warped = warp(after, flow);
    return {std::move(warped), std::move(flow)};
}

RasterImage flow_to_raster(const FlowField& flow) {
    RasterImage img(flow.width, flow.height, 2);
    std::copy(flow.u.begin(), flow.u.end(), img.plane(0));
    std::copy(flow.v.begin(), flow.v.end(), img.plane(1));
    return img;
}

} // namespace hycd
