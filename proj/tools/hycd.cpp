// hycd — hyperspectral change detection toolkit
//
// Subcommands: coregister, c2va, dcva, synth, eval, run, batch.
// Exit codes: 0 success, 1 fatal stage error, 2 config/usage error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hycd/coregister.hpp"
#include "hycd/cva.hpp"
#include "hycd/dcva.hpp"
#include "hycd/pipeline.hpp"
#include "hycd/raster.hpp"
#include "hycd/synth.hpp"
#include "hycd/threshold.hpp"

namespace {

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const std::string part = s.substr(start, comma - start);
        if (!part.empty()) out.push_back(std::stoi(part));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

hycd::LayerSelection parse_layers_arg(const std::string& s) {
    if (s == "preset1") return hycd::LayerSelection::preset(1);
    if (s == "preset2") return hycd::LayerSelection::preset(2);
    if (s == "preset3") return hycd::LayerSelection::preset(3);
    hycd::LayerSelection sel;
    sel.indices = parse_int_list(s);
    if (sel.indices.empty())
        throw hycd::ConfigError("layers must be preset1|preset2|preset3 or a comma list like 2,5");
    return sel;
}

std::vector<std::uint32_t> parse_band_list(const std::string& s) {
    std::vector<std::uint32_t> out;
    for (int v : parse_int_list(s)) {
        if (v < 0) throw hycd::ConfigError("band indices must be >= 0");
        out.push_back(static_cast<std::uint32_t>(v));
    }
    return out;
}

int cmd_coregister(const std::string& before_path, const std::string& after_path,
                   std::uint32_t band, const std::string& out_path,
                   const std::string& flow_out, const hycd::FlowParams& params) {
    const hycd::RasterImage before = hycd::read_raster(before_path);
    const hycd::RasterImage after = hycd::read_raster(after_path);
    auto [warped, flow] = hycd::coregister_pair(before, after, band, params);
    hycd::write_raster(warped, out_path);
    std::printf("wrote %s\n", out_path.c_str());
    if (!flow_out.empty()) {
        hycd::write_raster(hycd::flow_to_raster(flow), flow_out);
        std::printf("wrote %s\n", flow_out.c_str());
    }
    std::printf("max displacement: %.3f px\n", static_cast<double>(flow.max_abs()));
    return 0;
}

int cmd_c2va(const std::string& before_path, const std::string& after_path, double percentile,
             const std::string& bands_arg, const std::string& out_mask,
             const std::string& out_mag, const std::string& out_angle) {
    hycd::RasterImage before = hycd::read_raster(before_path);
    hycd::RasterImage after = hycd::read_raster(after_path);
    if (!bands_arg.empty()) {
        const auto bands = parse_band_list(bands_arg);
        before = hycd::select_bands(before, bands);
        after = hycd::select_bands(after, bands);
    }
    const hycd::C2vaResult res = hycd::c2va_change_map(before, after, percentile);
    hycd::write_mask_pgm(res.mask, out_mask);
    std::printf("wrote %s\n", out_mask.c_str());
    if (!out_mag.empty()) {
        hycd::write_raster(hycd::scalar_to_raster(res.magnitude), out_mag);
        std::printf("wrote %s\n", out_mag.c_str());
    }
    if (!out_angle.empty()) {
        hycd::write_raster(hycd::scalar_to_raster(res.angle), out_angle);
        std::printf("wrote %s\n", out_angle.c_str());
    }
    std::printf("threshold: %g  changed: %.4f%%\n", res.mask.threshold_used,
                res.mask.changed_percent());
    return 0;
}

int cmd_dcva(const std::string& before_path, const std::string& after_path,
             const std::string& bands_arg, const std::string& layers_arg,
             const std::string& threshold_method, const hycd::ThresholdSpec& thr_in,
             const hycd::SelectionParams& sel, std::uint64_t seed,
             const std::string& weights, const std::string& out_mask,
             const std::string& out_norm) {
    hycd::RasterImage before = hycd::read_raster(before_path);
    hycd::RasterImage after = hycd::read_raster(after_path);
    if (!bands_arg.empty()) {
        const auto bands = parse_band_list(bands_arg);
        before = hycd::select_bands(before, bands);
        after = hycd::select_bands(after, bands);
    }
    const hycd::LayerSelection layers = parse_layers_arg(layers_arg);

    hycd::ThresholdSpec thr = thr_in;
    if (threshold_method == "otsu") thr.method = hycd::ThresholdSpec::Method::Otsu;
    else if (threshold_method == "adaptive") thr.method = hycd::ThresholdSpec::Method::Adaptive;
    else throw hycd::ConfigError("threshold must be otsu or adaptive");

    const hycd::FeatureExtractor ext =
        weights.empty() ? hycd::builtin_extractor(seed, static_cast<int>(before.bands))
                        : hycd::load_extractor(weights);

    const hycd::DcvaResult res = hycd::dcva_change_map(before, after, ext, layers, sel, thr);
    hycd::write_mask_pgm(res.mask, out_mask);
    std::printf("wrote %s\n", out_mask.c_str());
    if (!out_norm.empty()) {
        hycd::write_raster(hycd::scalar_to_raster(res.norm), out_norm);
        std::printf("wrote %s\n", out_norm.c_str());
    }
    if (!res.mask.warning.empty()) std::printf("warning: %s\n", res.mask.warning.c_str());
    if (std::isfinite(res.norm_bimodality))
        std::printf("norm bimodality coefficient: %.3f\n", res.norm_bimodality);
    std::printf("method: %s  threshold: %g  changed: %.4f%%\n", res.mask.method_tag.c_str(),
                res.mask.threshold_used, res.mask.changed_percent());
    return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_prefix) {
    const hycd::SceneSpec spec = hycd::scene_spec_from_file(spec_path);
    const hycd::ScenePair pair = hycd::generate_pair(spec);
    hycd::write_raster(pair.before, out_prefix + "before.bin");
    hycd::write_raster(pair.after, out_prefix + "after.bin");
    hycd::write_mask_pgm(pair.truth, out_prefix + "truth.pgm");
    std::printf("wrote %sbefore.bin %safter.bin %struth.pgm\n", out_prefix.c_str(),
                out_prefix.c_str(), out_prefix.c_str());
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& truth_path,
             const std::string& out_csv) {
    const hycd::ChangeMap pred = hycd::read_mask_pgm(pred_path);
    const hycd::ChangeMap truth = hycd::read_mask_pgm(truth_path);
    const hycd::DetectionMetrics m = hycd::evaluate(pred, truth);
    char row[256];
    std::snprintf(row, sizeof row, "%.6f,%.6f,%.6f,%.6f,%.4f\n", m.precision, m.recall, m.f1,
                  m.iou, m.changed_percent);
    const std::string csv = std::string("precision,recall,f1,iou,changed_percent\n") + row;
    if (!out_csv.empty()) {
        std::ofstream f(out_csv);
        if (!f) throw hycd::IoError("cannot open " + out_csv);
        f << csv;
        std::printf("wrote %s\n", out_csv.c_str());
    }
    std::printf("%s", csv.c_str());
    return 0;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides) {
    const hycd::PipelineConfig config = hycd::load_pipeline_config(config_path, overrides);
    const hycd::RunReport report = hycd::run(config);
    for (const auto& a : report.artifacts) std::printf("wrote %s\n", a.c_str());
    if (!report.warning.empty()) std::printf("warning: %s\n", report.warning.c_str());
    if (std::isfinite(report.otsu_bimodality))
        std::printf("norm bimodality coefficient: %.3f\n", report.otsu_bimodality);
    std::printf("changed: %.4f%%  threshold: %g  max_flow: %.4f  time: %.2fs\n",
                report.changed_percent, report.threshold_used, report.max_flow, report.seconds);
    return 0;
}

int cmd_batch(const std::string& configs_dir, const std::string& out_csv) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(configs_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw hycd::ConfigError("no .json configs in " + configs_dir);

    std::vector<hycd::BatchItem> items;
    for (const auto& f : files)
        items.push_back({f.stem().string(), hycd::load_pipeline_config(f.string())});

    hycd::run_batch(items, out_csv);
    std::printf("wrote %s (%zu rows)\n", out_csv.c_str(), items.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hyperspectral change detection: coregistration, C2VA, DCVA, synthetic benchmarks"};
    app.require_subcommand(1);

    // coregister
    auto* co = app.add_subcommand("coregister", "align the after image onto the before grid");
    std::string co_before, co_after, co_out, co_flow_out;
    std::uint32_t co_band = 0;
    hycd::FlowParams co_params;
    co->add_option("--before", co_before)->required();
    co->add_option("--after", co_after)->required();
    co->add_option("--band", co_band, "band used to estimate the flow");
    co->add_option("--out", co_out, "warped after image")->required();
    co->add_option("--flow-out", co_flow_out, "flow as a 2-band raster (u, v)");
    co->add_option("--levels", co_params.pyramid_levels);
    co->add_option("--radius", co_params.window_radius);
    co->add_option("--iters", co_params.iterations_per_level);
    co->add_option("--eps", co_params.regularization_eps);

    // c2va
    auto* cv = app.add_subcommand("c2va", "change vector analysis over the full spectrum");
    std::string cv_before, cv_after, cv_bands, cv_mask, cv_mag, cv_angle;
    double cv_percentile = 90.0;
    cv->add_option("--before", cv_before)->required();
    cv->add_option("--after", cv_after)->required();
    cv->add_option("--percentile", cv_percentile);
    cv->add_option("--bands", cv_bands, "comma-separated band subset (default: all)");
    cv->add_option("--out-mask", cv_mask)->required();
    cv->add_option("--out-mag", cv_mag);
    cv->add_option("--out-angle", cv_angle);

    // dcva
    auto* dc = app.add_subcommand("dcva", "deep-feature change vector analysis");
    std::string dc_before, dc_after, dc_bands, dc_layers = "preset1", dc_thresh = "otsu";
    std::string dc_weights, dc_mask, dc_norm;
    std::uint64_t dc_seed = 0;
    hycd::ThresholdSpec dc_spec;
    hycd::SelectionParams dc_sel;
    dc->add_option("--before", dc_before)->required();
    dc->add_option("--after", dc_after)->required();
    dc->add_option("--bands", dc_bands, "comma-separated band subset, e.g. 30,20,10,45");
    dc->add_option("--layers", dc_layers, "preset1|preset2|preset3 or comma list");
    dc->add_option("--threshold", dc_thresh, "otsu or adaptive");
    dc->add_option("--bins", dc_spec.otsu_bins);
    dc->add_option("--radius", dc_spec.adaptive_window_radius);
    dc->add_option("--k", dc_spec.adaptive_k);
    dc->add_option("--clusters", dc_sel.clusters_k);
    dc->add_option("--keep-percentile", dc_sel.keep_percentile);
    dc->add_option("--seed", dc_seed, "extractor weight seed");
    dc->add_option("--weights", dc_weights, "extractor weight file (f32 blob + JSON header)");
    dc->add_option("--out-mask", dc_mask)->required();
    dc->add_option("--out-norm", dc_norm);

    // synth
    auto* sy = app.add_subcommand("synth", "generate a synthetic pair with ground truth");
    std::string sy_spec, sy_prefix;
    sy->add_option("--spec", sy_spec)->required();
    sy->add_option("--out-prefix", sy_prefix)->required();

    // eval
    auto* ev = app.add_subcommand("eval", "compare a predicted mask against ground truth");
    std::string ev_pred, ev_truth, ev_out;
    ev->add_option("--pred", ev_pred)->required();
    ev->add_option("--truth", ev_truth)->required();
    ev->add_option("--out", ev_out, "metrics CSV path");

    // run
    auto* ru = app.add_subcommand("run", "execute a pipeline config");
    std::string ru_config;
    std::vector<std::string> ru_overrides;
    ru->add_option("--config", ru_config)->required();
    ru->add_option("--override", ru_overrides, "key=value config overrides (dotted keys)");

    // batch
    auto* ba = app.add_subcommand("batch", "run every config in a directory into one CSV");
    std::string ba_dir, ba_out = "batch.csv";
    ba->add_option("--configs", ba_dir)->required();
    ba->add_option("--out", ba_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (co->parsed()) return cmd_coregister(co_before, co_after, co_band, co_out, co_flow_out, co_params);
        if (cv->parsed()) return cmd_c2va(cv_before, cv_after, cv_percentile, cv_bands, cv_mask, cv_mag, cv_angle);
        if (dc->parsed()) return cmd_dcva(dc_before, dc_after, dc_bands, dc_layers, dc_thresh,
                                          dc_spec, dc_sel, dc_seed, dc_weights, dc_mask, dc_norm);
        if (sy->parsed()) return cmd_synth(sy_spec, sy_prefix);
        if (ev->parsed()) return cmd_eval(ev_pred, ev_truth, ev_out);
        if (ru->parsed()) return cmd_run(ru_config, ru_overrides);
        if (ba->parsed()) return cmd_batch(ba_dir, ba_out);
    } catch (const hycd::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
