#include "citysig/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "citysig/csv.hpp"
#include "citysig/error.hpp"
#include "citysig/mapping.hpp"
#include "citysig/rng.hpp"

namespace citysig {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration.

namespace {

Date parse_config_date(const std::string& text, const char* field) {
    auto d = parse_date(text, DateFormat::iso);
    if (!d) throw_config("bad_config", std::string(field) + " is not a YYYY-MM-DD date: " + text);
    return *d;
}

} // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    cfg.permits_path = j.value("permits", "");
    cfg.incidents_path = j.value("incidents", "");
    cfg.permits_mapping_path = j.value("permits_mapping", "");
    cfg.incidents_mapping_path = j.value("incidents_mapping", "");
    cfg.outdir = j.value("outdir", "");

    if (j.contains("window")) {
        const auto& w = j.at("window");
        if (w.contains("start")) cfg.window.first = parse_config_date(w.at("start"), "window.start");
        if (w.contains("end")) cfg.window.last = parse_config_date(w.at("end"), "window.end");
        if (w.contains("permit_mode")) {
            const std::string mode = w.at("permit_mode");
            if (mode == "start_date") cfg.permit_window_mode = WindowMode::start_date;
            else if (mode == "overlap") cfg.permit_window_mode = WindowMode::overlap;
            else throw_config("bad_config", "window.permit_mode must be start_date or overlap");
        }
    }
    if (j.contains("cluster")) {
        const auto& c = j.at("cluster");
        cfg.cluster.k_min = c.value("k_min", cfg.cluster.k_min);
        cfg.cluster.k_max = c.value("k_max", cfg.cluster.k_max);
        cfg.cluster.restarts = c.value("restarts", cfg.cluster.restarts);
        cfg.cluster.max_iters = c.value("max_iters", cfg.cluster.max_iters);
        cfg.cluster.tol = c.value("tol", cfg.cluster.tol);
        cfg.cluster.seed = c.value("seed", cfg.cluster.seed);
        if (c.contains("init")) cfg.cluster.init = init_scheme_from_name(c.at("init").get<std::string>());
    }
    if (j.contains("regress")) {
        const auto& r = j.at("regress");
        cfg.regress.folds = r.value("folds", cfg.regress.folds);
        cfg.regress.min_incidents_per_zone =
            r.value("min_incidents_per_zone", cfg.regress.min_incidents_per_zone);
        if (r.contains("models")) {
            cfg.regress.models.clear();
            for (const auto& name : r.at("models"))
                cfg.regress.models.push_back(model_kind_from_name(name.get<std::string>()));
        }
    }
    cfg.exclusion_min_share = j.value("exclusion_min_share", cfg.exclusion_min_share);
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_config("bad_config", "cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw_config("bad_config", "cannot parse config file " + path + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json PipelineConfig::to_json() const {
    nlohmann::json models = nlohmann::json::array();
    for (ModelKind k : regress.models) models.push_back(model_kind_name(k));
    return {{"permits", permits_path},
            {"incidents", incidents_path},
            {"permits_mapping", permits_mapping_path},
            {"incidents_mapping", incidents_mapping_path},
            {"window",
             {{"start", format_date(window.first)},
              {"end", format_date(window.last)},
              {"permit_mode", permit_window_mode == WindowMode::start_date ? "start_date" : "overlap"}}},
            {"cluster",
             {{"k_min", cluster.k_min},
              {"k_max", cluster.k_max},
              {"restarts", cluster.restarts},
              {"max_iters", cluster.max_iters},
              {"tol", cluster.tol},
              {"seed", cluster.seed},
              {"init", init_scheme_name(cluster.init)}}},
            {"regress",
             {{"folds", regress.folds},
              {"min_incidents_per_zone", regress.min_incidents_per_zone},
              {"models", models}}},
            {"exclusion_min_share", exclusion_min_share},
            {"outdir", outdir}};
}

void PipelineConfig::validate() const {
    if (permits_path.empty()) throw_config("bad_config", "permits_path must be set");
    if (incidents_path.empty()) throw_config("bad_config", "incidents_path must be set");
    if (permits_mapping_path.empty())
        throw_config("bad_config", "permits_mapping path must be set");
    if (incidents_mapping_path.empty())
        throw_config("bad_config", "incidents_mapping path must be set");
    if (outdir.empty()) throw_config("bad_config", "outdir must be set");
    if (!(window.first <= window.last)) throw_config("bad_config", "window start is after its end");
    if (cluster.k_min < 2) throw_config("bad_config", "cluster.k_min must be at least 2");
    if (cluster.k_max < cluster.k_min) throw_config("bad_config", "cluster.k_max must be at least k_min");
    if (cluster.restarts < 1) throw_config("bad_config", "cluster.restarts must be at least 1");
    if (cluster.max_iters < 1) throw_config("bad_config", "cluster.max_iters must be at least 1");
    if (cluster.tol < 0.0) throw_config("bad_config", "cluster.tol must be non-negative");
    if (regress.folds < 2) throw_config("bad_config", "regress.folds must be at least 2");
    if (regress.min_incidents_per_zone < 1)
        throw_config("bad_config", "regress.min_incidents_per_zone must be at least 1");
    if (regress.models.empty()) throw_config("bad_config", "regress.models must not be empty");
    for (size_t a = 0; a < regress.models.size(); ++a)
        for (size_t b = a + 1; b < regress.models.size(); ++b)
            if (regress.models[a] == regress.models[b])
                throw_config("bad_config", "regress.models lists a model twice");
    if (!(exclusion_min_share >= 0.0 && exclusion_min_share < 1.0))
        throw_config("bad_config", "exclusion_min_share must lie in [0, 1)");
}

uint64_t fnv1a64(std::string_view text) {
    uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

// ---------------------------------------------------------------------------
// Shared file plumbing.

namespace {

fs::path artifact_path(const PipelineConfig& cfg, const char* name) {
    return fs::path(cfg.outdir) / name;
}

std::ofstream open_artifact(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_data("io_error", "cannot open output file: " + path.string());
    return out;
}

void close_artifact(std::ofstream& out, const fs::path& path) {
    out.flush();
    if (!out) throw_data("io_error", "cannot write output file: " + path.string());
}

std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_data("io_error", "cannot open input file: " + path.string());
    return in;
}

void write_json_artifact(const PipelineConfig& cfg, const char* name, const nlohmann::json& j) {
    const fs::path path = artifact_path(cfg, name);
    auto out = open_artifact(path);
    out << j.dump(2) << '\n';
    close_artifact(out, path);
}

nlohmann::json read_json_artifact(const PipelineConfig& cfg, const char* name) {
    auto in = open_input(artifact_path(cfg, name));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw_data("io_error", std::string("cannot parse ") + name + ": " + e.what());
    }
    return j;
}

// The full calendar, for re-reading clean artifacts that were already
// window-filtered at ingest.
constexpr DateWindow kAllDates{{1, 1, 1}, {9999, 12, 31}};

std::vector<PermitRecord> read_clean_permits(const PipelineConfig& cfg) {
    auto in = open_input(artifact_path(cfg, artifact::permits_clean));
    auto [records, report] = parse_permits(in, ColumnMapping::canonical_permits(), kAllDates, {});
    if (report.rows_rejected != 0)
        throw_data("bad_row", "clean permit artifact contains invalid rows");
    return std::move(records);
}

std::vector<IncidentRecord> read_clean_incidents(const PipelineConfig& cfg) {
    auto in = open_input(artifact_path(cfg, artifact::incidents_clean));
    auto [records, report] = parse_incidents(in, ColumnMapping::canonical_incidents(), kAllDates, {});
    if (report.rows_rejected != 0)
        throw_data("bad_row", "clean incident artifact contains invalid rows");
    return std::move(records);
}

SignatureMatrix read_signatures(const PipelineConfig& cfg) {
    auto in = open_input(artifact_path(cfg, artifact::signatures));
    return read_signatures_csv(in);
}

std::string format_fixed(double value, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, value);
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------
// Aggregation and prediction primitives.

std::vector<ZoneResponse> aggregate_response(std::span<const IncidentRecord> incidents,
                                             uint64_t min_count) {
    std::map<std::string, std::vector<double>> by_zone;
    for (const auto& inc : incidents) by_zone[inc.zone_id].push_back(inc.response_time_s);

    std::vector<ZoneResponse> out;
    out.reserve(by_zone.size());
    for (auto& [zone, values] : by_zone) {
        ZoneResponse r;
        r.zone_id = zone;
        r.count = values.size();
        r.mean_s = pairwise_sum(values) / static_cast<double>(values.size());
        r.included = r.count >= min_count;
        out.push_back(std::move(r));
    }
    return out;
}

void write_response_csv(std::ostream& out, std::span<const ZoneResponse> rows) {
    CsvWriter w(out);
    w.write_row({"zone_id", "mean_response_s", "incident_count", "included"});
    for (const auto& r : rows)
        w.write_row({r.zone_id, format_double(r.mean_s), std::to_string(r.count),
                     r.included ? "1" : "0"});
}

std::vector<ZoneResponse> read_response_csv(std::istream& in) {
    CsvReader reader(in);
    auto header = reader.next();
    if (!header || header->size() != 4 || (*header)[0] != "zone_id")
        throw_data("bad_row", "unexpected response header");
    std::vector<ZoneResponse> out;
    while (auto row = reader.next()) {
        if (row->size() != 4) throw_data("bad_row", "response row has wrong column count");
        ZoneResponse r;
        r.zone_id = (*row)[0];
        auto mean = parse_double((*row)[1]);
        auto count = parse_int((*row)[2]);
        if (!mean || !count || *count < 0) throw_data("bad_row", "bad response row for zone " + r.zone_id);
        r.mean_s = *mean;
        r.count = static_cast<uint64_t>(*count);
        r.included = (*row)[3] == "1";
        out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(),
              [](const ZoneResponse& a, const ZoneResponse& b) { return a.zone_id < b.zone_id; });
    return out;
}

PredictionResult predict_zone(const Vec8& signature, std::span<const Vec8> centroids,
                              const std::map<int, AnyModel>& best_models) {
    if (centroids.empty()) throw_internal("internal_error", "no centroids");
    double best = std::numeric_limits<double>::infinity();
    int cluster = 0;
    for (size_t c = 0; c < centroids.size(); ++c) {
        double d2 = 0.0;
        for (size_t d = 0; d < signature.size(); ++d) {
            const double diff = signature[d] - centroids[c][d];
            d2 += diff * diff;
        }
        if (d2 < best) {
            best = d2;
            cluster = static_cast<int>(c);
        }
    }
    PredictionResult result;
    result.cluster = cluster;
    auto it = best_models.find(cluster);
    if (it != best_models.end()) result.predicted_s = predict(it->second, signature);
    return result;
}

// ---------------------------------------------------------------------------
// Stages.

void stage_ingest(const PipelineConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.outdir);

    const ColumnMapping permit_mapping = ColumnMapping::load(cfg.permits_mapping_path);
    const ColumnMapping incident_mapping = ColumnMapping::load(cfg.incidents_mapping_path);

    {
        const fs::path rejected_path = artifact_path(cfg, artifact::rejected_permits);
        auto rejected = open_artifact(rejected_path);
        IngestOptions options;
        options.window_mode = cfg.permit_window_mode;
        options.quarantine = &rejected;
        auto [permits, report] = parse_permits_file(cfg.permits_path, permit_mapping, cfg.window, options);
        close_artifact(rejected, rejected_path);

        const fs::path clean_path = artifact_path(cfg, artifact::permits_clean);
        auto clean = open_artifact(clean_path);
        write_permits_csv(clean, permits);
        close_artifact(clean, clean_path);
        write_json_artifact(cfg, artifact::ingest_permits_report, report.to_json());
    }
    {
        const fs::path rejected_path = artifact_path(cfg, artifact::rejected_incidents);
        auto rejected = open_artifact(rejected_path);
        IngestOptions options;
        options.quarantine = &rejected;
        auto [incidents, report] =
            parse_incidents_file(cfg.incidents_path, incident_mapping, cfg.window, options);
        close_artifact(rejected, rejected_path);

        const fs::path clean_path = artifact_path(cfg, artifact::incidents_clean);
        auto clean = open_artifact(clean_path);
        write_incidents_csv(clean, incidents);
        close_artifact(clean, clean_path);
        write_json_artifact(cfg, artifact::ingest_incidents_report, report.to_json());
    }
}

void stage_signatures(const PipelineConfig& cfg) {
    cfg.validate();
    const auto permits = read_clean_permits(cfg);
    const SignatureMatrix m = signatures_from_permits(permits);

    const fs::path path = artifact_path(cfg, artifact::signatures);
    auto out = open_artifact(path);
    write_signatures_csv(out, m);
    close_artifact(out, path);
}

void stage_cluster(const PipelineConfig& cfg) {
    cfg.validate();
    const SignatureMatrix m = read_signatures(cfg);

    KMeansParams tmpl;
    tmpl.restarts = cfg.cluster.restarts;
    tmpl.max_iters = cfg.cluster.max_iters;
    tmpl.convergence_tol = cfg.cluster.tol;
    tmpl.seed = cfg.cluster.seed;
    tmpl.init = cfg.cluster.init;

    const KSweepReport sweep = sweep_k(m, cfg.cluster.k_min, cfg.cluster.k_max, tmpl);

    // Same derived seed as the sweep cell, so this reproduces the winning
    // model exactly.
    KMeansParams best_params = tmpl;
    best_params.k = sweep.selected_k;
    best_params.seed = mix_seed(tmpl.seed, static_cast<uint64_t>(sweep.selected_k));
    ClusteringModel model = kmeans_best_of(m, best_params);

    {
        const fs::path path = artifact_path(cfg, artifact::ksweep);
        auto out = open_artifact(path);
        write_ksweep_csv(out, sweep);
        close_artifact(out, path);
    }
    {
        const fs::path path = artifact_path(cfg, artifact::clusters);
        auto out = open_artifact(path);
        write_clusters_csv(out, m.zone_ids, model.assignments);
        close_artifact(out, path);
    }
    nlohmann::json meta = model.to_json();
    meta["selected_k"] = sweep.selected_k;
    meta["k_sweep_clamped"] = sweep.clamped;
    meta["effective_k_max"] = sweep.effective_k_max;
    write_json_artifact(cfg, artifact::clusters_meta, meta);
}

namespace {

struct TrainJoin {
    SignatureMatrix matrix;
    std::vector<int> assignments; // aligned with matrix rows
    std::vector<ZoneResponse> response;
    int k = 0;
};

TrainJoin load_train_inputs(const PipelineConfig& cfg) {
    TrainJoin join;
    join.matrix = read_signatures(cfg);

    auto in = open_input(artifact_path(cfg, artifact::clusters));
    auto [zones, assignments] = read_clusters_csv(in);
    if (zones != join.matrix.zone_ids)
        throw_data("bad_mapping", "clusters.csv and signatures.csv cover different zones");
    join.assignments = std::move(assignments);

    const auto meta = read_json_artifact(cfg, artifact::clusters_meta);
    join.k = meta.at("k").get<int>();
    for (int a : join.assignments)
        if (a < 0 || a >= join.k) throw_data("bad_mapping", "cluster label out of range");

    auto rin = open_input(artifact_path(cfg, artifact::response));
    join.response = read_response_csv(rin);
    return join;
}

} // namespace

void stage_train(const PipelineConfig& cfg) {
    cfg.validate();

    // Aggregate incidents first; training joins it with the clustering.
    const auto incidents = read_clean_incidents(cfg);
    if (incidents.empty())
        throw_data("no_incidents", "no accepted incidents to aggregate");
    const auto response =
        aggregate_response(incidents, static_cast<uint64_t>(cfg.regress.min_incidents_per_zone));
    {
        const fs::path path = artifact_path(cfg, artifact::response);
        auto out = open_artifact(path);
        write_response_csv(out, response);
        close_artifact(out, path);
    }

    const TrainJoin join = load_train_inputs(cfg);
    const size_t n_zones = join.matrix.size();

    // Incident share per cluster; incidents in zones without a signature
    // count toward the total but belong to no cluster.
    uint64_t total_incidents = 0;
    for (const auto& r : join.response) total_incidents += r.count;
    std::vector<uint64_t> cluster_incidents(static_cast<size_t>(join.k), 0);
    std::vector<uint64_t> cluster_zones(static_cast<size_t>(join.k), 0);
    for (size_t i = 0; i < n_zones; ++i) ++cluster_zones[static_cast<size_t>(join.assignments[i])];
    std::map<std::string, const ZoneResponse*> response_by_zone;
    for (const auto& r : join.response) response_by_zone[r.zone_id] = &r;
    for (size_t i = 0; i < n_zones; ++i) {
        auto it = response_by_zone.find(join.matrix.zone_ids[i]);
        if (it != response_by_zone.end())
            cluster_incidents[static_cast<size_t>(join.assignments[i])] += it->second->count;
    }

    const uint64_t seed_regress = mix_seed(cfg.cluster.seed, 0x5EED);

    nlohmann::json clusters_json = nlohmann::json::object();
    std::vector<std::array<std::string, 4>> eval_rows; // cluster, model, r2, params

    for (int c = 0; c < join.k; ++c) {
        const double share = total_incidents == 0
                                 ? 0.0
                                 : static_cast<double>(cluster_incidents[static_cast<size_t>(c)]) /
                                       static_cast<double>(total_incidents);
        const bool retained = share >= cfg.exclusion_min_share;

        Dataset data;
        for (size_t i = 0; i < n_zones; ++i) {
            if (join.assignments[i] != c) continue;
            auto it = response_by_zone.find(join.matrix.zone_ids[i]);
            if (it == response_by_zone.end() || !it->second->included) continue;
            data.features.push_back(join.matrix.rows[i]);
            data.targets.push_back(it->second->mean_s);
            data.row_ids.push_back(join.matrix.zone_ids[i]);
        }

        nlohmann::json cj = {{"share", share},
                             {"n_incidents", cluster_incidents[static_cast<size_t>(c)]},
                             {"n_zones", cluster_zones[static_cast<size_t>(c)]},
                             {"n_eligible_zones", data.size()},
                             {"retained", retained}};

        if (retained) {
            nlohmann::json evals = nlohmann::json::object();
            nlohmann::json models_json = nlohmann::json::object();
            std::string best_kind;
            double best_score = 0.0;
            bool have_best = false;

            for (size_t ki = 0; ki < cfg.regress.models.size(); ++ki) {
                const ModelKind kind = cfg.regress.models[ki];
                const auto grid = default_grid(kind);
                const uint64_t seed_ck =
                    mix_seed(seed_regress, static_cast<uint64_t>(c) * 8 + ki);
                // A kind that cannot be fit on this cluster (rank-deficient
                // design, constant targets, too few eligible zones) is recorded
                // and skipped; the run only fails if a stage-level input is bad.
                try {
                    const CvResult cv = cross_validate(data, grid, cfg.regress.folds, seed_ck);
                    const std::string params = describe_params(grid[cv.best_index]);
                    evals[model_kind_name(kind)] = {{"r_squared", cv.score}, {"params", params}};
                    models_json[model_kind_name(kind)] = to_json(cv.model);
                    eval_rows.push_back({std::to_string(c), model_kind_name(kind),
                                         format_double(cv.score), params});
                    if (!have_best || cv.score > best_score) {
                        best_score = cv.score;
                        best_kind = model_kind_name(kind);
                        have_best = true;
                    }
                } catch (const Error& e) {
                    evals[model_kind_name(kind)] = {{"error", e.code()}};
                    eval_rows.push_back({std::to_string(c), model_kind_name(kind), "n/a",
                                         "error=" + e.code()});
                }
            }
            cj["evals"] = evals;
            cj["models"] = models_json;
            if (have_best) cj["best"] = best_kind;
        }
        clusters_json[std::to_string(c)] = cj;
    }

    nlohmann::json models = {{"schema_version", 1},
                             {"k", join.k},
                             {"seed", seed_regress},
                             {"folds", cfg.regress.folds},
                             {"min_incidents_per_zone", cfg.regress.min_incidents_per_zone},
                             {"exclusion_min_share", cfg.exclusion_min_share},
                             {"total_incidents", total_incidents},
                             {"clusters", clusters_json}};
    write_json_artifact(cfg, artifact::models, models);

    const fs::path eval_path = artifact_path(cfg, artifact::eval_report);
    auto out = open_artifact(eval_path);
    CsvWriter w(out);
    w.write_row({"cluster", "model", "r_squared", "params"});
    for (const auto& row : eval_rows) w.write_row({row[0], row[1], row[2], row[3]});
    close_artifact(out, eval_path);
}

namespace {

std::map<int, AnyModel> load_best_models(const nlohmann::json& models_json) {
    std::map<int, AnyModel> best;
    for (const auto& [key, cj] : models_json.at("clusters").items()) {
        if (!cj.at("retained").get<bool>() || !cj.contains("best")) continue;
        const std::string kind = cj.at("best").get<std::string>();
        best.emplace(std::stoi(key), any_model_from_json(cj.at("models").at(kind)));
    }
    return best;
}

} // namespace

void stage_predict(const PipelineConfig& cfg) {
    cfg.validate();
    const SignatureMatrix m = read_signatures(cfg);
    const auto meta = read_json_artifact(cfg, artifact::clusters_meta);
    const ClusteringModel cluster_model = ClusteringModel::from_json(meta);
    const auto models_json = read_json_artifact(cfg, artifact::models);
    const auto best = load_best_models(models_json);

    const fs::path path = artifact_path(cfg, artifact::predictions);
    auto out = open_artifact(path);
    CsvWriter w(out);
    w.write_row({"zone_id", "cluster", "predicted_response_s", "status"});
    for (size_t i = 0; i < m.size(); ++i) {
        const PredictionResult r = predict_zone(m.rows[i], cluster_model.centroids, best);
        w.write_row({m.zone_ids[i], std::to_string(r.cluster),
                     r.predicted_s ? format_double(*r.predicted_s) : std::string(),
                     r.predicted_s ? "ok" : "no_model_for_cluster"});
    }
    close_artifact(out, path);
}

void stage_report(const PipelineConfig& cfg) {
    cfg.validate();
    const SignatureMatrix m = read_signatures(cfg);
    auto cin_ = open_input(artifact_path(cfg, artifact::clusters));
    auto [zones, assignments] = read_clusters_csv(cin_);
    if (zones != m.zone_ids)
        throw_data("bad_mapping", "clusters.csv and signatures.csv cover different zones");
    auto rin = open_input(artifact_path(cfg, artifact::response));
    const auto response = read_response_csv(rin);
    const auto models_json = read_json_artifact(cfg, artifact::models);
    const auto meta = read_json_artifact(cfg, artifact::clusters_meta);
    const int k = meta.at("k").get<int>();

    // Per-zone signatures as percentages, 0.1% precision.
    {
        const fs::path path = artifact_path(cfg, artifact::report_signatures_pct);
        auto out = open_artifact(path);
        CsvWriter w(out);
        std::vector<std::string> header{"zone_id"};
        for (auto name : kWorkTypeNames) header.emplace_back(name);
        w.write_row(header);
        for (size_t i = 0; i < m.size(); ++i) {
            std::vector<std::string> row{m.zone_ids[i]};
            for (double v : m.rows[i]) row.push_back(format_fixed(v * 100.0, 1));
            w.write_row(row);
        }
        close_artifact(out, path);
    }

    std::map<std::string, const ZoneResponse*> response_by_zone;
    for (const auto& r : response) response_by_zone[r.zone_id] = &r;

    // Retained clusters only, whole-second means of zone means.
    {
        const fs::path path = artifact_path(cfg, artifact::report_cluster_response);
        auto out = open_artifact(path);
        CsvWriter w(out);
        w.write_row({"cluster", "mean_response_s", "n_zones", "n_incidents"});
        for (int c = 0; c < k; ++c) {
            const auto& cj = models_json.at("clusters").at(std::to_string(c));
            if (!cj.at("retained").get<bool>()) continue;
            std::vector<double> means;
            uint64_t n_incidents = 0;
            for (size_t i = 0; i < m.size(); ++i) {
                if (assignments[i] != c) continue;
                auto it = response_by_zone.find(m.zone_ids[i]);
                if (it == response_by_zone.end()) continue;
                n_incidents += it->second->count;
                if (it->second->included) means.push_back(it->second->mean_s);
            }
            const double mean =
                means.empty() ? 0.0 : pairwise_sum(means) / static_cast<double>(means.size());
            w.write_row({std::to_string(c), format_fixed(mean, 0), std::to_string(means.size()),
                         std::to_string(n_incidents)});
        }
        close_artifact(out, path);
    }

    // Per-cluster-per-model held-out R squared, 2 decimals. A model kind that
    // could not be fit on a cluster shows n/a.
    {
        const fs::path path = artifact_path(cfg, artifact::report_model_r2);
        auto out = open_artifact(path);
        CsvWriter w(out);
        w.write_row({"cluster", "model", "r_squared"});
        for (int c = 0; c < k; ++c) {
            const auto& cj = models_json.at("clusters").at(std::to_string(c));
            if (!cj.at("retained").get<bool>()) continue;
            for (ModelKind kind : cfg.regress.models) {
                const auto& ev = cj.at("evals").at(model_kind_name(kind));
                const std::string cell =
                    ev.contains("r_squared") ? format_fixed(ev.at("r_squared").get<double>(), 2)
                                             : "n/a";
                w.write_row({std::to_string(c), model_kind_name(kind), cell});
            }
        }
        close_artifact(out, path);
    }

    // Per-cluster mean signatures, every cluster included (dropped ones too).
    {
        const fs::path path = artifact_path(cfg, artifact::report_cluster_mean_signatures);
        auto out = open_artifact(path);
        CsvWriter w(out);
        std::vector<std::string> header{"cluster"};
        for (auto name : kWorkTypeNames) header.emplace_back(name);
        header.emplace_back("n_zones");
        header.emplace_back("retained");
        w.write_row(header);
        for (int c = 0; c < k; ++c) {
            std::array<std::vector<double>, kWorkTypeCount> cols;
            for (size_t i = 0; i < m.size(); ++i) {
                if (assignments[i] != c) continue;
                for (size_t d = 0; d < kWorkTypeCount; ++d) cols[d].push_back(m.rows[i][d]);
            }
            const size_t n_members = cols[0].size();
            std::vector<std::string> row{std::to_string(c)};
            for (size_t d = 0; d < kWorkTypeCount; ++d)
                row.push_back(format_double(
                    n_members == 0 ? 0.0 : pairwise_sum(cols[d]) / static_cast<double>(n_members)));
            row.push_back(std::to_string(n_members));
            const auto& cj = models_json.at("clusters").at(std::to_string(c));
            row.push_back(cj.at("retained").get<bool>() ? "1" : "0");
            w.write_row(row);
        }
        close_artifact(out, path);
    }

    // Manifest: everything needed to reproduce the run; wall-clock time is
    // isolated in the single "timing" field.
    {
        const auto permits_report = read_json_artifact(cfg, artifact::ingest_permits_report);
        const auto incidents_report = read_json_artifact(cfg, artifact::ingest_incidents_report);
        nlohmann::json excluded = nlohmann::json::array();
        for (int c = 0; c < k; ++c)
            if (!models_json.at("clusters").at(std::to_string(c)).at("retained").get<bool>())
                excluded.push_back(c);
        const std::string config_dump = cfg.to_json().dump();
        char hash_hex[32];
        std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                      static_cast<unsigned long long>(fnv1a64(config_dump)));
        const auto now_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::system_clock::now().time_since_epoch())
                                .count();
        nlohmann::json manifest = {
            {"artifact_version", kVersion},
            {"config", cfg.to_json()},
            {"config_hash", hash_hex},
            {"seed", cfg.cluster.seed},
            {"selected_k", meta.at("selected_k")},
            {"silhouette", meta.at("silhouette")},
            {"inertia", meta.at("inertia")},
            {"excluded_clusters", excluded},
            {"rows",
             {{"permits", permits_report}, {"incidents", incidents_report}, {"zones", m.size()}}},
            {"timing", {{"unix_ms", now_ms}}}};
        write_json_artifact(cfg, artifact::manifest, manifest);
    }
}

// ---------------------------------------------------------------------------
// Orchestration.

namespace {

void quarantine_partial_artifacts(const PipelineConfig& cfg) {
    const fs::path out(cfg.outdir);
    std::error_code ec;
    if (!fs::is_directory(out, ec)) return;
    std::vector<fs::path> partial;
    for (const auto& entry : fs::directory_iterator(out, ec))
        if (entry.is_regular_file()) partial.push_back(entry.path());
    if (partial.empty()) return;
    const fs::path quarantine = out / "quarantine";
    fs::create_directories(quarantine, ec);
    if (ec) return;
    for (const auto& path : partial) fs::rename(path, quarantine / path.filename(), ec);
}

} // namespace

void run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.outdir);

    struct StageEntry {
        const char* name;
        void (*fn)(const PipelineConfig&);
    };
    static constexpr StageEntry stages[] = {
        {"ingest", stage_ingest},   {"signatures", stage_signatures}, {"cluster", stage_cluster},
        {"train", stage_train},     {"predict", stage_predict},       {"report", stage_report},
    };

    for (const auto& stage : stages) {
        try {
            stage.fn(cfg);
        } catch (const Error& e) {
            quarantine_partial_artifacts(cfg);
            throw Error(e.kind(), e.code(), std::string("stage ") + stage.name + ": " + e.message());
        } catch (const std::exception& e) {
            quarantine_partial_artifacts(cfg);
            throw Error(ErrorKind::internal, "internal_error",
                        std::string("stage ") + stage.name + ": " + e.what());
        }
    }
}

} // namespace citysig
