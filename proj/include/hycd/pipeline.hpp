#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hycd/coregister.hpp"
#include "hycd/dcva.hpp"
#include "hycd/raster.hpp"
#include "hycd/threshold.hpp"

namespace hycd {

struct RegistrationConfig {
    bool enabled = false;
    std::uint32_t band_index = 0;
    FlowParams flow;
};

struct AoiConfig {
    std::uint32_t x0 = 0;
    std::uint32_t y0 = 0;
    std::uint32_t size = 512;
};

/// One end-to-end run: load pair -> optional coregistration -> optional
/// AOI patch -> change detection -> mask + scalar maps + CSV row.
struct PipelineConfig {
    std::string before_path;
    std::string after_path;
    std::string location = "scene";
    std::string out_prefix = "out";

    RegistrationConfig registration;
    std::optional<AoiConfig> aoi; // absent = analyze the full frame

    enum class Method { C2va, DcvaOtsu, DcvaAda };
    Method method = Method::C2va;

    double percentile = 90.0;                 // c2va
    LayerSelection layers = LayerSelection::preset(1);
    std::vector<std::uint32_t> dcva_bands;    // empty = all bands
    SelectionParams selection;
    ThresholdSpec threshold;                  // bins / radius / k per method
    std::uint64_t seed = 0;
    std::string weights_path;                 // empty = builtin extractor

    void validate() const; // throws ConfigError
    std::string method_label() const;
    std::string layers_label() const; // "-" for c2va, "2;5" for dcva
};

struct RunReport {
    std::vector<std::string> artifacts; // every file written, sidecars included
    std::string csv_path;
    double changed_percent = 0.0;
    double threshold_used = 0.0;
    double max_flow = 0.0;
    double otsu_bimodality = std::numeric_limits<double>::quiet_NaN();
    std::string warning;
    double seconds = 0.0;
};

/// Executes the stages in order. Any stage error aborts with a
/// stage-labeled message and removes whatever was already written.
RunReport run(const PipelineConfig& config);

/// CSV header used by run() and run_batch(); the batch variant carries a
/// trailing `error` column. Timing is deliberately not a column so reruns
/// are byte-identical.
std::string csv_header(bool with_error);
std::string csv_row(const PipelineConfig& config, const RunReport& report);

struct BatchItem {
    std::string name; // used as the location tag if the config has none
    PipelineConfig config;
};

/// Runs every item, isolating failures into the `error` column, and writes
/// the aggregate table to out_csv_path (also returned).
std::string run_batch(const std::vector<BatchItem>& items, const std::string& out_csv_path);

PipelineConfig pipeline_config_from_text(const std::string& json_text);

/// Loads a config file and applies `key=value` overrides (dotted keys,
/// values parsed as JSON when possible, else taken as strings).
PipelineConfig load_pipeline_config(const std::string& path,
                                    const std::vector<std::string>& overrides = {});

} // namespace hycd
