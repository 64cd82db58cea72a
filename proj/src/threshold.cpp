#include "hycd/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace hycd {

void ThresholdSpec::validate() const {
    if (method == Method::Percentile && !(percentile_p > 0.0 && percentile_p < 100.0))
        throw ValidationError("percentile_p must be in (0, 100)");
    if (otsu_bins < 2) throw ValidationError("otsu_bins must be >= 2");
    if (adaptive_window_radius < 1) throw ValidationError("adaptive_window_radius must be >= 1");
    if (!std::isfinite(adaptive_k)) throw ValidationError("adaptive_k must be finite");
}

namespace {

std::vector<float> collect_valid(const ScalarMap& map) {
    std::vector<float> out;
    out.reserve(map.values.size());
    for (std::size_t i = 0; i < map.values.size(); ++i)
        if (map.pixel_valid(i)) out.push_back(map.values[i]);
    return out;
}

std::size_t nearest_rank_index(double p, std::size_t n) {
    // 1-based rank ceil(p/100 * n), clamped into [1, n]
    double r = std::ceil(p / 100.0 * static_cast<double>(n));
    if (r < 1.0) r = 1.0;
    if (r > static_cast<double>(n)) r = static_cast<double>(n);
    return static_cast<std::size_t>(r) - 1;
}

// Compares A1^2/B1 > A2^2/B2 exactly for non-negative B. Values come from
// integer histogram sums, so 128-bit cross-multiplication is exact; a
// long-double fallback covers the (unrealistically large) overflow case.
bool score_greater(long long A1, long long B1, long long A2, long long B2) {
    const unsigned long long a1 = static_cast<unsigned long long>(std::llabs(A1));
    const unsigned long long a2 = static_cast<unsigned long long>(std::llabs(A2));
    if (B1 <= 0 || a1 == 0) return false;
    if (B2 <= 0 || a2 == 0) return true;
    const unsigned __int128 q1 = static_cast<unsigned __int128>(a1) * a1;
    const unsigned __int128 q2 = static_cast<unsigned __int128>(a2) * a2;
    const unsigned __int128 lim = ~static_cast<unsigned __int128>(0);
    if (q1 > lim / static_cast<unsigned long long>(B2) ||
        q2 > lim / static_cast<unsigned long long>(B1)) {
        const long double s1 = static_cast<long double>(a1) * a1 / static_cast<long double>(B1);
        const long double s2 = static_cast<long double>(a2) * a2 / static_cast<long double>(B2);
        return s1 > s2;
    }
    return q1 * static_cast<unsigned long long>(B2) > q2 * static_cast<unsigned long long>(B1);
}

} // namespace

double nearest_rank_percentile(std::vector<double> values, double p) {
    if (values.empty()) throw EmptyStatsError("percentile of an empty set");
    if (!(p > 0.0 && p <= 100.0)) throw ValidationError("percentile must be in (0, 100]");
    std::sort(values.begin(), values.end());
    return values[nearest_rank_index(p, values.size())];
}

double percentile_threshold(const ScalarMap& values, double p) {
    if (!(p > 0.0 && p <= 100.0)) throw ValidationError("percentile must be in (0, 100]");
    std::vector<float> v = collect_valid(values);
    if (v.empty()) throw EmptyStatsError("no valid pixels for percentile threshold");
    std::sort(v.begin(), v.end());
    return static_cast<double>(v[nearest_rank_index(p, v.size())]);
}

double otsu_threshold_values(std::vector<float> values, int bins) {
    if (bins < 2) throw ValidationError("otsu bins must be >= 2");
    if (values.empty()) throw EmptyStatsError("no valid pixels for Otsu threshold");
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double mn = *mn_it, mx = *mx_it;
    if (!(mx > mn))
        throw DegenerateDistributionError("Otsu threshold undefined for constant input");

    std::vector<long long> hist(static_cast<std::size_t>(bins), 0);
    const double scale = static_cast<double>(bins) / (mx - mn);
    for (float v : values) {
        int idx = static_cast<int>((static_cast<double>(v) - mn) * scale);
        if (idx < 0) idx = 0;
        if (idx >= bins) idx = bins - 1;
        ++hist[static_cast<std::size_t>(idx)];
    }

    // Between-class variance w0*w1*(mu0-mu1)^2 over bin indices is
    // proportional to (m0*n1 - m1*n0)^2 / (n0*n1), all exact integers.
    long long n_total = 0, m_total = 0;
    for (int i = 0; i < bins; ++i) {
        n_total += hist[static_cast<std::size_t>(i)];
        m_total += hist[static_cast<std::size_t>(i)] * i;
    }

    long long n0 = 0, m0 = 0;
    long long best_a = 0, best_b = 0;
    int best_t = 0;
    for (int t = 0; t + 1 < bins; ++t) {
        n0 += hist[static_cast<std::size_t>(t)];
        m0 += hist[static_cast<std::size_t>(t)] * t;
        const long long n1 = n_total - n0;
        const long long a = m0 * n1 - (m_total - m0) * n0;
        const long long b = n0 * n1;
        if (score_greater(a, b, best_a, best_b)) {
            best_a = a;
            best_b = b;
            best_t = t;
        }
    }
    return mn + static_cast<double>(best_t + 1) * (mx - mn) / static_cast<double>(bins);
}

double otsu_threshold(const ScalarMap& values, int bins) {
    return otsu_threshold_values(collect_valid(values), bins);
}

double bimodality_coefficient(const std::vector<float>& values) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double n = static_cast<double>(values.size());
    if (values.size() < 4) return nan;
    double mean = 0.0;
    for (float v : values) mean += v;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (float v : values) {
        const double d = static_cast<double>(v) - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (!(m2 > 0.0)) return nan;
    const double skew = m3 / std::pow(m2, 1.5);
    const double excess_kurtosis = m4 / (m2 * m2) - 3.0;
    const double correction = 3.0 * (n - 1.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0));
    return (skew * skew + 1.0) / (excess_kurtosis + correction);
}

ChangeMap adaptive_threshold_map(const ScalarMap& values, int radius, double k) {
    if (radius < 1) throw ValidationError("adaptive window radius must be >= 1");
    if (!std::isfinite(k)) throw ValidationError("adaptive k must be finite");
    const std::uint32_t w = values.width, h = values.height;
    if (values.values.size() != static_cast<std::size_t>(w) * h)
        throw ValidationError("scalar map size does not match dimensions");

    // summed-area tables over valid pixels: value, value^2, count
    const std::size_t sw = w + 1;
    std::vector<double> s1(sw * (h + 1), 0.0), s2(sw * (h + 1), 0.0);
    std::vector<std::int64_t> sc(sw * (h + 1), 0);
    for (std::uint32_t y = 0; y < h; ++y) {
        for (std::uint32_t x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const bool valid = values.pixel_valid(i);
            const double v = valid ? static_cast<double>(values.values[i]) : 0.0;
            const std::size_t t = (static_cast<std::size_t>(y) + 1) * sw + x + 1;
            s1[t] = v + s1[t - 1] + s1[t - sw] - s1[t - sw - 1];
            s2[t] = v * v + s2[t - 1] + s2[t - sw] - s2[t - sw - 1];
            sc[t] = (valid ? 1 : 0) + sc[t - 1] + sc[t - sw] - sc[t - sw - 1];
        }
    }
    auto window = [&](std::uint32_t x0, std::uint32_t y0, std::uint32_t x1, std::uint32_t y1,
                      double& sum, double& sumsq, std::int64_t& count) {
        const std::size_t a = static_cast<std::size_t>(y0) * sw + x0;
        const std::size_t b = static_cast<std::size_t>(y0) * sw + x1 + 1;
        const std::size_t c = static_cast<std::size_t>(y1 + 1) * sw + x0;
        const std::size_t d = static_cast<std::size_t>(y1 + 1) * sw + x1 + 1;
        sum = s1[d] - s1[b] - s1[c] + s1[a];
        sumsq = s2[d] - s2[b] - s2[c] + s2[a];
        count = sc[d] - sc[b] - sc[c] + sc[a];
    };

    ChangeMap out(w, h);
    char tag[64];
    std::snprintf(tag, sizeof tag, "adaptive(r=%d,k=%g)", radius, k);
    out.method_tag = tag;
    out.valid_pixels = values.valid_count();

    const std::uint32_t r = static_cast<std::uint32_t>(radius);
    double threshold_sum = 0.0;
    std::uint64_t threshold_n = 0;
    for (std::uint32_t y = 0; y < h; ++y) {
        const std::uint32_t y0 = y > r ? y - r : 0;
        const std::uint32_t y1 = std::min(h - 1, y + r);
        for (std::uint32_t x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!values.pixel_valid(i)) continue;
            const std::uint32_t x0 = x > r ? x - r : 0;
            const std::uint32_t x1 = std::min(w - 1, x + r);
            double sum, sumsq;
            std::int64_t count;
            window(x0, y0, x1, y1, sum, sumsq, count);
            const double mean = sum / static_cast<double>(count);
            const double var = std::max(0.0, sumsq / static_cast<double>(count) - mean * mean);
            const double t = mean + k * std::sqrt(var);
            threshold_sum += t;
            ++threshold_n;
            out.mask[i] = static_cast<double>(values.values[i]) > t ? 1 : 0;
        }
    }
    out.threshold_used = threshold_n > 0 ? threshold_sum / static_cast<double>(threshold_n) : 0.0;
    return out;
}

ChangeMap apply_threshold(const ScalarMap& values, double threshold, const std::string& method_tag) {
    if (!std::isfinite(threshold)) throw ValidationError("threshold must be finite");
    ChangeMap out(values.width, values.height);
    out.threshold_used = threshold;
    out.method_tag = method_tag;
    out.valid_pixels = values.valid_count();
    for (std::size_t i = 0; i < values.values.size(); ++i)
        out.mask[i] = (values.pixel_valid(i) && static_cast<double>(values.values[i]) > threshold) ? 1 : 0;
    return out;
}

} // namespace hycd
