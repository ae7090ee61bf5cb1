// citysig: construction-signature clustering and per-cluster response-time
// regression over city permit and incident extracts.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "citysig/csv.hpp"
#include "citysig/error.hpp"
#include "citysig/ingest.hpp"
#include "citysig/pipeline.hpp"
#include "citysig/synth.hpp"

namespace {

using namespace citysig;

// Pipeline options shared by every stage subcommand. Optionals only
// override when the flag was given; the config file supplies the rest.
struct PipelineFlags {
    std::string config_path;
    std::optional<std::string> permits, incidents, permits_mapping, incidents_mapping, outdir;
    std::optional<std::string> window_start, window_end, permit_window_mode, init;
    std::optional<int> k_min, k_max, restarts, max_iters, folds, min_incidents;
    std::optional<double> tol, min_share;
    std::optional<uint64_t> seed;
    std::optional<std::string> models;
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f) {
    cmd->add_option("--config", f.config_path, "pipeline config JSON; flags override its fields");
    cmd->add_option("--permits", f.permits, "raw permit CSV path");
    cmd->add_option("--incidents", f.incidents, "raw incident CSV path");
    cmd->add_option("--permits-mapping", f.permits_mapping, "column mapping JSON for permits");
    cmd->add_option("--incidents-mapping", f.incidents_mapping, "column mapping JSON for incidents");
    cmd->add_option("--out", f.outdir, "artifact output directory");
    cmd->add_option("--window-start", f.window_start, "first accepted date, YYYY-MM-DD");
    cmd->add_option("--window-end", f.window_end, "last accepted date, YYYY-MM-DD");
    cmd->add_option("--permit-window-mode", f.permit_window_mode,
                    "permit date filter: start_date or overlap");
    cmd->add_option("--k-min", f.k_min, "smallest k in the sweep");
    cmd->add_option("--k-max", f.k_max, "largest k in the sweep");
    cmd->add_option("--restarts", f.restarts, "k-means restarts per k");
    cmd->add_option("--max-iters", f.max_iters, "Lloyd iteration cap");
    cmd->add_option("--tol", f.tol, "centroid-movement convergence tolerance");
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--init", f.init, "centroid initialization: kmeanspp or uniform");
    cmd->add_option("--folds", f.folds, "cross-validation folds");
    cmd->add_option("--min-incidents", f.min_incidents, "minimum incidents for a zone's mean");
    cmd->add_option("--models", f.models, "comma-separated model kinds (ols,tree,forest)");
    cmd->add_option("--min-share", f.min_share, "cluster exclusion threshold on incident share");
}

PipelineConfig build_config(const PipelineFlags& f) {
    PipelineConfig cfg;
    if (!f.config_path.empty()) cfg = PipelineConfig::load(f.config_path);
    if (f.permits) cfg.permits_path = *f.permits;
    if (f.incidents) cfg.incidents_path = *f.incidents;
    if (f.permits_mapping) cfg.permits_mapping_path = *f.permits_mapping;
    if (f.incidents_mapping) cfg.incidents_mapping_path = *f.incidents_mapping;
    if (f.outdir) cfg.outdir = *f.outdir;
    if (f.window_start) {
        auto d = parse_date(*f.window_start, DateFormat::iso);
        if (!d) throw_config("bad_config", "--window-start is not a YYYY-MM-DD date");
        cfg.window.first = *d;
    }
    if (f.window_end) {
        auto d = parse_date(*f.window_end, DateFormat::iso);
        if (!d) throw_config("bad_config", "--window-end is not a YYYY-MM-DD date");
        cfg.window.last = *d;
    }
    if (f.permit_window_mode) {
        if (*f.permit_window_mode == "start_date") cfg.permit_window_mode = WindowMode::start_date;
        else if (*f.permit_window_mode == "overlap") cfg.permit_window_mode = WindowMode::overlap;
        else throw_config("bad_config", "--permit-window-mode must be start_date or overlap");
    }
    if (f.k_min) cfg.cluster.k_min = *f.k_min;
    if (f.k_max) cfg.cluster.k_max = *f.k_max;
    if (f.restarts) cfg.cluster.restarts = *f.restarts;
    if (f.max_iters) cfg.cluster.max_iters = *f.max_iters;
    if (f.tol) cfg.cluster.tol = *f.tol;
    if (f.seed) cfg.cluster.seed = *f.seed;
    if (f.init) cfg.cluster.init = init_scheme_from_name(*f.init);
    if (f.folds) cfg.regress.folds = *f.folds;
    if (f.min_incidents) cfg.regress.min_incidents_per_zone = *f.min_incidents;
    if (f.min_share) cfg.exclusion_min_share = *f.min_share;
    if (f.models) {
        cfg.regress.models.clear();
        std::string_view rest = *f.models;
        while (!rest.empty()) {
            const size_t comma = rest.find(',');
            cfg.regress.models.push_back(model_kind_from_name(trim_view(rest.substr(0, comma))));
            rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        }
    }
    return cfg;
}

struct SynthFlags {
    std::string outdir;
    int zones = 150;
    int clusters = 5;
    double concentration = 300.0;
    int permits_lo = 100, permits_hi = 200;
    int incidents_lo = 20, incidents_hi = 40;
    std::string response = "linear";
    double base = 300.0;
    std::string weights;
    double delta = 120.0;
    double threshold = 0.3;
    double noise_sd = 30.0;
    uint64_t seed = 0;
};

int run_synth(const SynthFlags& f) {
    SyntheticSpec spec;
    spec.n_zones = f.zones;
    spec.n_clusters = f.clusters;
    spec.concentration = f.concentration;
    spec.permits_per_zone = {f.permits_lo, f.permits_hi};
    spec.incidents_per_zone = {f.incidents_lo, f.incidents_hi};
    spec.noise_sd = f.noise_sd;
    spec.seed = f.seed;
    if (f.response == "linear") spec.response.family = ResponseFamily::linear;
    else if (f.response == "step") spec.response.family = ResponseFamily::step;
    else throw_config("bad_config", "--response must be linear or step");
    spec.response.base = f.base;
    spec.response.delta = f.delta;
    spec.response.threshold = f.threshold;
    if (!f.weights.empty()) {
        std::string_view rest = f.weights;
        size_t d = 0;
        while (!rest.empty() && d < kWorkTypeCount) {
            const size_t comma = rest.find(',');
            auto v = parse_double(trim_view(rest.substr(0, comma)));
            if (!v) throw_config("bad_config", "--weights must be 8 comma-separated numbers");
            spec.response.weights[d++] = *v;
            rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        }
        if (d != kWorkTypeCount || !rest.empty())
            throw_config("bad_config", "--weights must be 8 comma-separated numbers");
    }

    const SyntheticCity city = generate(spec);
    std::filesystem::create_directories(f.outdir);
    auto write_file = [&](const char* name, auto&& writer) {
        const auto path = std::filesystem::path(f.outdir) / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw_data("io_error", "cannot open output file: " + path.string());
        writer(out);
        out.flush();
        if (!out) throw_data("io_error", "cannot write output file: " + path.string());
    };
    write_file("permits.csv", [&](std::ostream& out) { write_permits_csv(out, city.permits); });
    write_file("incidents.csv", [&](std::ostream& out) { write_incidents_csv(out, city.incidents); });
    write_file("truth.csv", [&](std::ostream& out) { write_truth_csv(out, city.truth); });
    std::printf("wrote %zu permits, %zu incidents, %zu zones to %s\n", city.permits.size(),
                city.incidents.size(), city.truth.size(), f.outdir.c_str());
    return 0;
}

// Single-zone prediction printed to stdout as JSON.
int predict_one(const PipelineConfig& cfg, const std::string& zone) {
    const auto dir = std::filesystem::path(cfg.outdir);
    auto open = [&](const char* name) {
        std::ifstream in(dir / name, std::ios::binary);
        if (!in) throw_data("io_error", std::string("cannot open artifact: ") + name);
        return in;
    };
    auto sig_in = open(artifact::signatures);
    const SignatureMatrix m = read_signatures_csv(sig_in);
    const ptrdiff_t row = m.find(zone);
    if (row < 0) throw_data("empty_zone", "zone " + zone + " is not in signatures.csv");

    nlohmann::json meta, models_json;
    open(artifact::clusters_meta) >> meta;
    open(artifact::models) >> models_json;
    const ClusteringModel cluster_model = ClusteringModel::from_json(meta);

    std::map<int, AnyModel> best;
    for (const auto& [key, cj] : models_json.at("clusters").items()) {
        if (!cj.at("retained").get<bool>() || !cj.contains("best")) continue;
        best.emplace(std::stoi(key), any_model_from_json(cj.at("models").at(cj.at("best").get<std::string>())));
    }

    const PredictionResult r = predict_zone(m.rows[static_cast<size_t>(row)],
                                            cluster_model.centroids, best);
    nlohmann::json out = {{"zone_id", zone}, {"cluster", r.cluster}};
    if (r.predicted_s) out["predicted_response_s"] = *r.predicted_s;
    else out["status"] = "no_model_for_cluster";
    std::cout << out.dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"construction-signature clustering and response-time regression"};
    app.require_subcommand(1);

    PipelineFlags flags;
    std::string predict_zone_id;

    CLI::App* cmd_run = app.add_subcommand("run", "full pipeline: ingest through reports");
    CLI::App* cmd_ingest = app.add_subcommand("ingest", "parse and validate raw permit/incident files");
    CLI::App* cmd_signatures = app.add_subcommand("signatures", "per-zone work-type composition vectors");
    CLI::App* cmd_cluster = app.add_subcommand("cluster", "k-means sweep and final clustering");
    CLI::App* cmd_train = app.add_subcommand("train", "per-cluster regression with cross-validation");
    CLI::App* cmd_predict = app.add_subcommand("predict", "response-time predictions from trained artifacts");
    CLI::App* cmd_report = app.add_subcommand("report", "render the summary report tables");
    for (CLI::App* cmd : {cmd_run, cmd_ingest, cmd_signatures, cmd_cluster, cmd_train, cmd_predict, cmd_report})
        add_pipeline_flags(cmd, flags);
    cmd_predict->add_option("--zone", predict_zone_id, "print one zone's prediction instead of predictions.csv");

    SynthFlags synth_flags;
    CLI::App* cmd_synth = app.add_subcommand("synth", "generate a synthetic city with known structure");
    cmd_synth->add_option("--out", synth_flags.outdir, "output directory")->required();
    cmd_synth->add_option("--zones", synth_flags.zones, "number of zones");
    cmd_synth->add_option("--clusters", synth_flags.clusters, "number of planted clusters");
    cmd_synth->add_option("--concentration", synth_flags.concentration,
                          "signature tightness around the cluster prototype");
    cmd_synth->add_option("--permits-lo", synth_flags.permits_lo, "min permits per zone");
    cmd_synth->add_option("--permits-hi", synth_flags.permits_hi, "max permits per zone");
    cmd_synth->add_option("--incidents-lo", synth_flags.incidents_lo, "min incidents per zone");
    cmd_synth->add_option("--incidents-hi", synth_flags.incidents_hi, "max incidents per zone");
    cmd_synth->add_option("--response", synth_flags.response, "ground-truth family: linear or step");
    cmd_synth->add_option("--base", synth_flags.base, "base response seconds");
    cmd_synth->add_option("--weights", synth_flags.weights, "linear family: 8 comma-separated weights");
    cmd_synth->add_option("--delta", synth_flags.delta, "step family: added seconds above threshold");
    cmd_synth->add_option("--threshold", synth_flags.threshold,
                          "step family: new_building+demolition proportion cutoff");
    cmd_synth->add_option("--noise-sd", synth_flags.noise_sd, "response noise standard deviation");
    cmd_synth->add_option("--seed", synth_flags.seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_synth->parsed()) return run_synth(synth_flags);

        const PipelineConfig cfg = build_config(flags);
        if (cmd_run->parsed()) run_pipeline(cfg);
        else if (cmd_ingest->parsed()) stage_ingest(cfg);
        else if (cmd_signatures->parsed()) stage_signatures(cfg);
        else if (cmd_cluster->parsed()) stage_cluster(cfg);
        else if (cmd_train->parsed()) stage_train(cfg);
        else if (cmd_predict->parsed()) {
            if (!predict_zone_id.empty()) return predict_one(cfg, predict_zone_id);
            stage_predict(cfg);
        } else if (cmd_report->parsed()) stage_report(cfg);
        return 0;
    } catch (const citysig::Error& e) {
        std::cerr << "error[" << e.code() << "]: " << e.message() << '\n';
        switch (e.kind()) {
            case citysig::ErrorKind::config: return 1;
            case citysig::ErrorKind::data: return 2;
            case citysig::ErrorKind::internal: return 3;
        }
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error[internal_error]: " << e.what() << '\n';
        return 3;
    }
}
