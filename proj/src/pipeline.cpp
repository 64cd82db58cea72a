#include "hycd/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "hycd/cva.hpp"
#include "binary_io.hpp"

namespace hycd {

void PipelineConfig::validate() const {
    if (before_path.empty() || after_path.empty())
        throw ConfigError("config needs 'before' and 'after' paths");
    if (out_prefix.empty()) throw ConfigError("config needs a non-empty out_prefix");
    if (!(percentile > 0.0 && percentile < 100.0))
        throw ConfigError("percentile must be in (0, 100)");
    if (layers.indices.empty()) throw ConfigError("layer selection must not be empty");
    try {
        if (registration.enabled) registration.flow.validate();
        selection.validate();
        threshold.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    if (aoi && aoi->size == 0) throw ConfigError("aoi size must be positive");
}

std::string PipelineConfig::method_label() const {
    switch (method) {
    case Method::C2va: return "c2va";
    case Method::DcvaOtsu: return "dcva_otsu";
    case Method::DcvaAda: return "dcva_ada";
    }
    return "?";
}

std::string PipelineConfig::layers_label() const {
    if (method == Method::C2va) return "-";
    std::string s;
    for (std::size_t i = 0; i < layers.indices.size(); ++i) {
        if (i) s += ';';
        s += std::to_string(layers.indices[i]);
    }
    return s;
}

namespace {

// removes everything written so far unless the run commits
struct ArtifactTracker {
    std::vector<std::string> written;
    bool committed = false;

    void add(const std::string& path) { written.push_back(path); }
    ~ArtifactTracker() {
        if (committed) return;
        for (const auto& p : written) {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
    }
};

std::string sanitize_csv_field(std::string s) {
    for (auto& c : s)
        if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
    return s;
}

std::string format_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string format_general(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void write_raster_tracked(const RasterImage& img, const std::string& path, ArtifactTracker& t,
                          RunReport& report) {
    write_raster(img, path);
    t.add(path);
    t.add(path + ".json");
    report.artifacts.push_back(path);
    report.artifacts.push_back(path + ".json");
}

} // namespace

std::string csv_header(bool with_error) {
    std::string h = "location,method,layers,changed_percent,threshold_used,max_flow";
    if (with_error) h += ",error";
    return h + "\n";
}

std::string csv_row(const PipelineConfig& config, const RunReport& report) {
    std::string row = sanitize_csv_field(config.location) + "," + config.method_label() + "," +
                      config.layers_label() + "," + format_fixed(report.changed_percent, 4) + "," +
                      format_general(report.threshold_used) + "," +
                      format_fixed(report.max_flow, 4);
    return row + "\n";
}

RunReport run(const PipelineConfig& config) {
    config.validate();
    const auto t_start = std::chrono::steady_clock::now();

    RunReport report;
    ArtifactTracker tracker;

    auto stage = [](const char* name, const std::string& what) {
        return Error("[" + std::string(name) + "] " + what);
    };

    // load
    RasterImage before, after;
    try {
        before = read_raster(config.before_path);
        after = read_raster(config.after_path);
        if (before.width != after.width || before.height != after.height ||
            before.bands != after.bands)
            throw ShapeError("before/after shapes differ");
    } catch (const Error& e) {
        throw stage("load", e.what());
    }

    // coregister
    try {
        if (config.registration.enabled) {
            auto [warped, flow] = coregister_pair(before, after, config.registration.band_index,
                                                  config.registration.flow);
            after = std::move(warped);
            report.max_flow = static_cast<double>(flow.max_abs());
        }
    } catch (const Error& e) {
        throw stage("coregister", e.what());
    }

    // area of interest
    try {
        if (config.aoi) {
            before = extract_patch(before, config.aoi->x0, config.aoi->y0, config.aoi->size);
            after = extract_patch(after, config.aoi->x0, config.aoi->y0, config.aoi->size);
        }
    } catch (const Error& e) {
        throw stage("aoi", e.what());
    }

    // change detection + outputs
    try {
        if (config.method == PipelineConfig::Method::C2va) {
            RasterImage b = before, a = after;
            if (!config.dcva_bands.empty()) {
                b = select_bands(before, config.dcva_bands);
                a = select_bands(after, config.dcva_bands);
            }
            C2vaResult res = c2va_change_map(b, a, config.percentile);
            report.changed_percent = res.mask.changed_percent();
            report.threshold_used = res.mask.threshold_used;
            report.warning = res.mask.warning;
            const std::string mask_path = config.out_prefix + "_mask.pgm";
            write_mask_pgm(res.mask, mask_path);
            tracker.add(mask_path);
            report.artifacts.push_back(mask_path);
            write_raster_tracked(scalar_to_raster(res.magnitude), config.out_prefix + "_magnitude.bin",
                                 tracker, report);
            write_raster_tracked(scalar_to_raster(res.angle), config.out_prefix + "_angle.bin",
                                 tracker, report);
        } else {
            RasterImage b = before, a = after;
            if (!config.dcva_bands.empty()) {
                b = select_bands(before, config.dcva_bands);
                a = select_bands(after, config.dcva_bands);
            }
            FeatureExtractor ext = config.weights_path.empty()
                                       ? builtin_extractor(config.seed, static_cast<int>(b.bands))
                                       : load_extractor(config.weights_path);
            ThresholdSpec thr = config.threshold;
            thr.method = config.method == PipelineConfig::Method::DcvaOtsu
                             ? ThresholdSpec::Method::Otsu
                             : ThresholdSpec::Method::Adaptive;
            DcvaResult res = dcva_change_map(b, a, ext, config.layers, config.selection, thr);
            report.otsu_bimodality = res.norm_bimodality;
            report.changed_percent = res.mask.changed_percent();
            report.threshold_used = res.mask.threshold_used;
            report.warning = res.mask.warning;
            const std::string mask_path = config.out_prefix + "_mask.pgm";
            write_mask_pgm(res.mask, mask_path);
            tracker.add(mask_path);
            report.artifacts.push_back(mask_path);
            write_raster_tracked(scalar_to_raster(res.norm), config.out_prefix + "_norm.bin",
                                 tracker, report);
        }
    } catch (const Error& e) {
        throw stage("cd", e.what());
    }

    // per-run report table
    try {
        report.csv_path = config.out_prefix + "_report.csv";
        detail::write_text_file(report.csv_path, csv_header(false) + csv_row(config, report));
        tracker.add(report.csv_path);
        report.artifacts.push_back(report.csv_path);
    } catch (const Error& e) {
        throw stage("report", e.what());
    }

    tracker.committed = true;
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

std::string run_batch(const std::vector<BatchItem>& items, const std::string& out_csv_path) {
    if (items.empty()) throw ConfigError("batch needs at least one config");

    std::string csv = csv_header(true);
    for (const auto& item : items) {
        PipelineConfig config = item.config;
        if (config.location == "scene" && !item.name.empty()) config.location = item.name;
        try {
            RunReport report = run(config);
            std::string row = csv_row(config, report);
            row.pop_back(); // newline
            csv += row + ",\n";
        } catch (const std::exception& e) {
            csv += sanitize_csv_field(config.location) + "," + config.method_label() + "," +
                   config.layers_label() + ",,,," + sanitize_csv_field(e.what()) + "\n";
        }
    }
    detail::write_text_file(out_csv_path, csv);
    return csv;
}

// ---- config parsing -------------------------------------------------------

namespace {

LayerSelection parse_layers(const nlohmann::json& j) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "preset1") return LayerSelection::preset(1);
        if (s == "preset2") return LayerSelection::preset(2);
        if (s == "preset3") return LayerSelection::preset(3);
        throw ConfigError("unknown layers preset '" + s + "'");
    }
    if (j.is_array()) {
        LayerSelection sel;
        sel.indices = j.get<std::vector<int>>();
        return sel;
    }
    throw ConfigError("layers must be a preset name or an array of indices");
}

} // namespace

PipelineConfig pipeline_config_from_text(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("unparseable config: ") + e.what());
    }
    try {
        PipelineConfig c;
        c.before_path = j.at("before").get<std::string>();
        c.after_path = j.at("after").get<std::string>();
        c.location = j.value("location", "scene");
        c.out_prefix = j.value("out_prefix", "out");

        if (j.contains("registration")) {
            const auto& r = j["registration"];
            c.registration.enabled = r.value("enabled", true);
            c.registration.band_index = r.value("band_index", 0u);
            c.registration.flow.pyramid_levels = r.value("pyramid_levels", 3);
            c.registration.flow.window_radius = r.value("window_radius", 8);
            c.registration.flow.iterations_per_level = r.value("iterations_per_level", 5);
            c.registration.flow.regularization_eps = r.value("regularization_eps", 1e-4);
        }
        if (j.contains("aoi")) {
            AoiConfig aoi;
            aoi.x0 = j["aoi"].value("x0", 0u);
            aoi.y0 = j["aoi"].value("y0", 0u);
            aoi.size = j["aoi"].value("size", 512u);
            c.aoi = aoi;
        }

        const std::string method = j.value("method", "c2va");
        if (method == "c2va") c.method = PipelineConfig::Method::C2va;
        else if (method == "dcva_otsu") c.method = PipelineConfig::Method::DcvaOtsu;
        else if (method == "dcva_ada") c.method = PipelineConfig::Method::DcvaAda;
        else throw ConfigError("unknown method '" + method + "'");

        c.percentile = j.value("percentile", 90.0);
        if (j.contains("layers")) c.layers = parse_layers(j["layers"]);
        if (j.contains("bands")) c.dcva_bands = j["bands"].get<std::vector<std::uint32_t>>();
        if (j.contains("selection")) {
            const auto& s = j["selection"];
            c.selection.clusters_k = s.value("clusters_k", 4);
            c.selection.keep_percentile = s.value("keep_percentile", 90.0);
            c.selection.rng_seed = s.value("rng_seed", 0ull);
        }
        if (j.contains("threshold")) {
            const auto& t = j["threshold"];
            c.threshold.otsu_bins = t.value("bins", 256);
            c.threshold.adaptive_window_radius = t.value("radius", 16);
            c.threshold.adaptive_k = t.value("k", 0.5);
        }
        c.seed = j.value("seed", 0ull);
        c.weights_path = j.value("weights", "");

        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
}

PipelineConfig load_pipeline_config(const std::string& path,
                                    const std::vector<std::string>& overrides) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (overrides.empty()) return pipeline_config_from_text(text);

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("unparseable config: ") + e.what());
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override must look like key=value: " + ov);
        const std::string key = ov.substr(0, eq);
        const std::string value = ov.substr(eq + 1);

        nlohmann::json* node = &j;
        std::size_t start = 0;
        while (true) {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot - start);
            if (part.empty()) throw ConfigError("bad override key: " + key);
            if (dot == std::string::npos) {
                nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
                (*node)[part] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
                break;
            }
            node = &(*node)[part];
            start = dot + 1;
        }
    }
    return pipeline_config_from_text(j.dump());
}

} // namespace hycd
