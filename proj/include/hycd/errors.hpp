#pragma once

#include <stdexcept>
#include <string>

namespace hycd {

// Base type for everything thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : Error { using Error::Error; };     // missing/garbled file header
struct SizeError : Error { using Error::Error; };       // byte-length mismatch
struct ValidationError : Error { using Error::Error; }; // invariant violation on a value
struct BoundsError : Error { using Error::Error; };     // window or index out of range
struct ShapeError : Error { using Error::Error; };      // dimension mismatch between inputs
struct IoError : Error { using Error::Error; };
struct EmptyStatsError : Error { using Error::Error; }; // statistic requested over zero valid pixels
struct DegenerateDistributionError : Error { using Error::Error; };
struct ClusteringError : Error { using Error::Error; };
struct PaddingError : Error { using Error::Error; };    // dims not divisible by downsample factor
struct ConfigError : Error { using Error::Error; };

} // namespace hycd
