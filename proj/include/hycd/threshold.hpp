#pragma once

#include <string>
#include <vector>

#include "hycd/raster.hpp"

namespace hycd {

struct ThresholdSpec {
    enum class Method { Percentile, Otsu, Adaptive };
    Method method = Method::Otsu;
    double percentile_p = 90.0;
    int otsu_bins = 256;
    int adaptive_window_radius = 16;
    double adaptive_k = 0.5;

    void validate() const;
};

/// Nearest-rank percentile: the ascending-sorted value at 1-based index
/// ceil(p/100 * n). The vector is taken by value and sorted in place.
double nearest_rank_percentile(std::vector<double> values, double p);

/// Nearest-rank percentile over the valid pixels of the map.
double percentile_threshold(const ScalarMap& values, double p);

/// Otsu's method on an equal-width histogram over [min, max]: returns the
/// bin-edge threshold maximizing the between-class variance
/// w0*w1*(mu0-mu1)^2, ties broken toward the lower edge. The scan uses
/// exact integer accumulators so the maximizer is reproducible bit-for-bit.
/// Throws DegenerateDistributionError on constant input.
double otsu_threshold(const ScalarMap& values, int bins = 256);
double otsu_threshold_values(std::vector<float> values, int bins);

/// Sarle's bimodality coefficient (skewness^2 + 1) / (excess kurtosis +
/// small-sample correction). Roughly 5/9 for a uniform distribution, below
/// for unimodal shapes, near 1 for two well-separated modes. A diagnostic
/// for how trustworthy an Otsu split is; NaN when n < 4 or the input is
/// constant.
double bimodality_coefficient(const std::vector<float>& values);

/// Niblack-style local threshold: per pixel T = mean + k*stddev over the
/// clamped (2r+1)^2 window of valid pixels, mask = value > T.
/// threshold_used records the mean of the per-pixel thresholds.
ChangeMap adaptive_threshold_map(const ScalarMap& values, int radius, double k);

/// mask = value > T; nodata pixels are never marked.
ChangeMap apply_threshold(const ScalarMap& values, double threshold,
                          const std::string& method_tag);

} // namespace hycd
