#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "citysig/error.hpp"
#include "citysig/pipeline.hpp"
#include "citysig/reference.hpp"
#include "citysig/rng.hpp"
#include "citysig/synth.hpp"

using namespace citysig;
namespace fs = std::filesystem;

namespace {

std::string error_code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "<no error>";
}

struct TempDir {
    fs::path path;

    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("citysig_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

std::string shipped_config(const char* name) {
    return std::string(CITYSIG_SOURCE_DIR) + "/configs/" + name;
}

// All four input paths set; fixtures override the data paths.
PipelineConfig base_config() {
    PipelineConfig cfg;
    cfg.permits_mapping_path = shipped_config("canonical_permits.json");
    cfg.incidents_mapping_path = shipped_config("canonical_incidents.json");
    return cfg;
}

IncidentRecord incident(std::string zone, double seconds) {
    IncidentRecord r;
    r.zone_id = std::move(zone);
    r.timestamp = DateTime{Date{2015, 6, 1}, 12, 0, 0};
    r.response_time_s = seconds;
    return r;
}

// Synthetic city on disk plus a config pointing at it.
struct CityFixture {
    TempDir dir;
    PipelineConfig cfg;

    explicit CityFixture(const std::string& tag, const SyntheticSpec& spec) : dir(tag) {
        auto city = generate(spec);
        std::ofstream permits(dir.file("permits.csv"), std::ios::binary);
        write_permits_csv(permits, city.permits);
        permits.close();
        std::ofstream incidents(dir.file("incidents.csv"), std::ios::binary);
        write_incidents_csv(incidents, city.incidents);
        incidents.close();

        cfg = base_config();
        cfg.permits_path = dir.file("permits.csv");
        cfg.incidents_path = dir.file("incidents.csv");
        cfg.outdir = dir.file("out");
        cfg.cluster.k_min = 2;
        cfg.cluster.k_max = 6;
        cfg.cluster.restarts = 8;
        cfg.cluster.seed = 4242;
        cfg.regress.folds = 4;
        cfg.regress.min_incidents_per_zone = 5;
    }
};

SyntheticSpec pipeline_spec() {
    SyntheticSpec spec;
    spec.n_zones = 40;
    spec.n_clusters = 3;
    spec.concentration = 250.0;
    spec.permits_per_zone = {60, 120};
    spec.incidents_per_zone = {15, 30};
    spec.noise_sd = 20.0;
    spec.seed = 909;
    spec.response.family = ResponseFamily::linear;
    spec.response.weights = {120.0, 0.0, 40.0, 150.0, -50.0, 0.0, -30.0, 0.0};
    return spec;
}

} // namespace

TEST_CASE("aggregate_response means, counts, and exclusion flag") {
    std::vector<IncidentRecord> incidents = {
        incident("10001", 300.0), incident("10001", 324.0), incident("10002", 100.0),
        incident("10002", 110.0), incident("10002", 120.0),
    };
    auto rows = aggregate_response(incidents, 3);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].zone_id == "10001");
    CHECK(rows[0].mean_s == doctest::Approx(312.0).epsilon(1e-15));
    CHECK(rows[0].count == 2);
    CHECK(!rows[0].included);
    CHECK(rows[1].zone_id == "10002");
    CHECK(rows[1].mean_s == doctest::Approx(110.0).epsilon(1e-12));
    CHECK(rows[1].count == 3);
    CHECK(rows[1].included);

    CHECK(aggregate_response({}, 1).empty());
}

TEST_CASE("aggregate_response matches the serial oracle on 200 incidents") {
    Rng rng(321);
    std::vector<IncidentRecord> incidents;
    const char* zones[6] = {"10001", "10002", "10003", "10004", "10005", "10006"};
    for (int i = 0; i < 200; ++i)
        incidents.push_back(incident(zones[rng.below(6)], 120.0 + 400.0 * rng.uniform01()));

    auto rows = aggregate_response(incidents, 10);
    auto oracle = serial::mean_by_zone(incidents);
    REQUIRE(rows.size() == oracle.size());
    for (const auto& row : rows) {
        REQUIRE(oracle.contains(row.zone_id));
        const auto& [mean, count] = oracle.at(row.zone_id);
        CHECK(row.count == count);
        CHECK(row.mean_s == doctest::Approx(mean).epsilon(1e-12));
        CHECK(row.included == (count >= 10));
    }
}

TEST_CASE("response CSV round-trips") {
    std::vector<IncidentRecord> incidents = {incident("10001", 312.5), incident("10002", 99.25)};
    auto rows = aggregate_response(incidents, 1);
    std::ostringstream out;
    write_response_csv(out, rows);
    CHECK(out.str().substr(0, out.str().find('\n')) == "zone_id,mean_response_s,incident_count,included");
    std::istringstream in(out.str());
    auto back = read_response_csv(in);
    REQUIRE(back.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].zone_id == rows[i].zone_id);
        CHECK(back[i].mean_s == rows[i].mean_s);
        CHECK(back[i].count == rows[i].count);
        CHECK(back[i].included == rows[i].included);
    }
}

TEST_CASE("predict_zone routes to the nearest centroid and its model") {
    std::vector<Vec8> centroids(2);
    centroids[0][0] = 1.0;
    centroids[1][1] = 1.0;

    OlsModel flat;
    flat.intercept = 288.0;
    std::map<int, AnyModel> models;
    models[0] = flat;
    OlsModel other;
    other.intercept = 400.0;
    models[1] = other;

    SUBCASE("exact centroid match") {
        auto r = predict_zone(centroids[0], centroids, models);
        CHECK(r.cluster == 0);
        REQUIRE(r.predicted_s.has_value());
        CHECK(*r.predicted_s == 288.0);
        auto r1 = predict_zone(centroids[1], centroids, models);
        CHECK(r1.cluster == 1);
        CHECK(*r1.predicted_s == 400.0);
    }
    SUBCASE("equidistant signature ties to cluster 0") {
        Vec8 mid{};
        mid[0] = 0.5;
        mid[1] = 0.5;
        auto r = predict_zone(mid, centroids, models);
        CHECK(r.cluster == 0);
        CHECK(*r.predicted_s == 288.0);
    }
    SUBCASE("missing model leaves the prediction empty") {
        models.erase(1);
        auto r = predict_zone(centroids[1], centroids, models);
        CHECK(r.cluster == 1);
        CHECK(!r.predicted_s.has_value());
    }
}

TEST_CASE("pipeline config JSON round-trips and hashes canonically") {
    PipelineConfig cfg;
    cfg.permits_path = "/data/p.csv";
    cfg.incidents_path = "/data/i.csv";
    cfg.permits_mapping_path = "/data/pm.json";
    cfg.incidents_mapping_path = "/data/im.json";
    cfg.outdir = "/tmp/out";
    cfg.cluster.k_min = 3;
    cfg.cluster.k_max = 7;
    cfg.cluster.seed = 99;
    cfg.regress.folds = 4;
    cfg.regress.models = {ModelKind::ols, ModelKind::forest};
    cfg.exclusion_min_share = 0.05;
    cfg.window = DateWindow{Date{2014, 2, 3}, Date{2016, 11, 30}};
    cfg.permit_window_mode = WindowMode::overlap;

    auto j = cfg.to_json();
    auto back = PipelineConfig::from_json(j);
    CHECK(back.to_json() == j);
    CHECK(back.permits_path == cfg.permits_path);
    CHECK(back.permits_mapping_path == cfg.permits_mapping_path);
    CHECK(back.incidents_mapping_path == cfg.incidents_mapping_path);
    CHECK(back.cluster.k_min == 3);
    CHECK(back.cluster.k_max == 7);
    CHECK(back.regress.models == cfg.regress.models);
    CHECK(back.exclusion_min_share == 0.05);
    CHECK(back.permit_window_mode == WindowMode::overlap);
    CHECK(back.window.first == cfg.window.first);
    CHECK(back.window.last == cfg.window.last);

    // Hash depends only on canonical content.
    CHECK(fnv1a64(j.dump()) == fnv1a64(back.to_json().dump()));
    CHECK(fnv1a64("a") != fnv1a64("b"));
}

TEST_CASE("pipeline config validation") {
    PipelineConfig cfg;
    cfg.permits_path = "p";
    cfg.incidents_path = "i";
    cfg.permits_mapping_path = "pm";
    cfg.incidents_mapping_path = "im";
    cfg.outdir = "o";
    cfg.validate();

    PipelineConfig bad = cfg;
    bad.permits_path.clear();
    CHECK(error_code_of([&] { bad.validate(); }) == "bad_config");

    bad = cfg;
    bad.permits_mapping_path.clear();
    CHECK(error_code_of([&] { bad.validate(); }) == "bad_config");

    bad = cfg;
    bad.incidents_mapping_path.clear();
    CHECK(error_code_of([&] { bad.validate(); }) == "bad_config");

    bad = cfg;
    bad.cluster.k_min = 1;
    CHECK(error_code_of([&] { bad.validate(); }) == "bad_config");

    bad = cfg;
    bad.cluster.k_max = 1;
    CHECK(error_code_of([&] { bad.validate(); }) == "bad_config");

    bad = cfg;
    bad.exclusion_min_share = 1.0;
    CHECK(error_code_of([&] { bad.validate(); }) == "bad_config");

    bad = cfg;
    bad.exclusion_min_share = -0.1;
    CHECK(error_code_of([&] { bad.validate(); }) == "bad_config");

    bad = cfg;
    bad.window.last = Date{2012, 1, 1};
    CHECK(error_code_of([&] { bad.validate(); }) == "bad_config");

    bad = cfg;
    bad.regress.folds = 1;
    CHECK(error_code_of([&] { bad.validate(); }) == "bad_config");

    bad = cfg;
    bad.regress.models.clear();
    CHECK(error_code_of([&] { bad.validate(); }) == "bad_config");
}

TEST_CASE("run_pipeline writes the full artifact set") {
    CityFixture fx("full", pipeline_spec());
    run_pipeline(fx.cfg);

    const char* expected[] = {
        artifact::permits_clean,       artifact::incidents_clean,
        artifact::rejected_permits,    artifact::rejected_incidents,
        artifact::ingest_permits_report, artifact::ingest_incidents_report,
        artifact::signatures,          artifact::response,
        artifact::ksweep,              artifact::clusters,
        artifact::clusters_meta,       artifact::models,
        artifact::eval_report,         artifact::predictions,
        artifact::report_signatures_pct, artifact::report_cluster_response,
        artifact::report_model_r2,     artifact::report_cluster_mean_signatures,
        artifact::manifest,
    };
    for (const char* name : expected) CHECK(fs::exists(fs::path(fx.cfg.outdir) / name));

    auto manifest = nlohmann::json::parse(slurp(fs::path(fx.cfg.outdir) / artifact::manifest));
    CHECK(manifest.at("artifact_version").get<std::string>() == kVersion);
    CHECK(manifest.at("selected_k").get<int>() == 3);
    CHECK(manifest.at("rows").at("zones").get<int>() == 40);
    CHECK(manifest.contains("config_hash"));
    CHECK(manifest.at("timing").contains("unix_ms"));

    // The planted structure is recovered.
    std::ifstream cl(fs::path(fx.cfg.outdir) / artifact::clusters);
    auto [zones, labels] = read_clusters_csv(cl);
    CHECK(zones.size() == 40);
    std::set<int> distinct(labels.begin(), labels.end());
    CHECK(distinct.size() == 3);
}

TEST_CASE("stage subcommands reproduce run_pipeline byte for byte") {
    auto spec = pipeline_spec();
    spec.seed = 1234;
    CityFixture fx("staged", spec);

    run_pipeline(fx.cfg);
    std::map<std::string, std::string> one_shot;
    for (const auto& entry : fs::directory_iterator(fx.cfg.outdir))
        if (entry.is_regular_file())
            one_shot[entry.path().filename().string()] = slurp(entry.path());
    CHECK(one_shot.size() == 19);

    // Same config, same outdir, six separate stage invocations.
    fs::remove_all(fx.cfg.outdir);
    stage_ingest(fx.cfg);
    stage_signatures(fx.cfg);
    stage_cluster(fx.cfg);
    stage_train(fx.cfg);
    stage_predict(fx.cfg);
    stage_report(fx.cfg);

    size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(fx.cfg.outdir)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        REQUIRE(one_shot.contains(name));
        auto a = one_shot.at(name);
        auto b = slurp(entry.path());
        if (name == artifact::manifest) {
            auto ja = nlohmann::json::parse(a);
            auto jb = nlohmann::json::parse(b);
            ja.at("timing").erase("unix_ms");
            jb.at("timing").erase("unix_ms");
            CHECK(ja == jb);
        } else {
            CHECK(a == b);
        }
        ++compared;
    }
    CHECK(compared == 19);
}

TEST_CASE("repeated runs are byte-identical outside the timing field") {
    auto spec = pipeline_spec();
    spec.seed = 5678;
    CityFixture fx("repeat", spec);

    run_pipeline(fx.cfg);
    auto first_dir = fx.dir.file("out_first");
    fs::rename(fx.cfg.outdir, first_dir);
    run_pipeline(fx.cfg);

    for (const auto& entry : fs::directory_iterator(first_dir)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        auto a = slurp(entry.path());
        auto b = slurp(fs::path(fx.cfg.outdir) / name);
        if (name == artifact::manifest) {
            auto ja = nlohmann::json::parse(a);
            auto jb = nlohmann::json::parse(b);
            ja.at("timing").erase("unix_ms");
            jb.at("timing").erase("unix_ms");
            CHECK(ja == jb);
        } else {
            CHECK(a == b);
        }
    }
}

TEST_CASE("clusters below the incident-share floor are dropped from regression") {
    // Hand-built city: zones 201xx form a plumbing-heavy cluster, zones
    // 202xx a demolition-heavy cluster, and the single zone 20999 sits alone
    // at a third corner with almost no incidents.
    std::vector<PermitRecord> permits;
    std::vector<IncidentRecord> incidents;
    Rng rng(13);
    // Composition out of 40 permits: mostly `major`, with alteration and
    // signage counts that vary by zone index so per-cluster designs stay
    // full rank after the constant-sum column is dropped.
    auto add_zone = [&](const std::string& zone, WorkType major, int idx, int n_incidents,
                        double mean) {
        const int n_alt = 5 + idx % 4;
        const int n_sig = 3 + (3 * idx) % 5;
        for (int i = 0; i < 40; ++i) {
            PermitRecord p;
            p.zone_id = zone;
            p.work_type = i < n_alt ? WorkType::alteration
                                    : (i < n_alt + n_sig ? WorkType::signage : major);
            p.start_date = Date{2014, 3, 1 + i % 27};
            permits.push_back(p);
        }
        for (int i = 0; i < n_incidents; ++i)
            incidents.push_back(incident(zone, mean + 10.0 * rng.normal()));
    };
    for (int i = 0; i < 8; ++i)
        add_zone("201" + std::to_string(10 + i), WorkType::plumbing, i, 30, 300.0 + 5.0 * i);
    for (int i = 0; i < 8; ++i)
        add_zone("202" + std::to_string(10 + i), WorkType::demolition, i, 30, 420.0 + 5.0 * i);
    add_zone("20999", WorkType::construction_equipment, 0, 6, 500.0);

    TempDir dir("exclusion");
    {
        std::ofstream p(dir.file("permits.csv"), std::ios::binary);
        write_permits_csv(p, permits);
        std::ofstream i(dir.file("incidents.csv"), std::ios::binary);
        write_incidents_csv(i, incidents);
    }
    PipelineConfig cfg = base_config();
    cfg.permits_path = dir.file("permits.csv");
    cfg.incidents_path = dir.file("incidents.csv");
    cfg.outdir = dir.file("out");
    cfg.cluster.k_min = 2;
    cfg.cluster.k_max = 4;
    cfg.cluster.restarts = 10;
    cfg.cluster.seed = 7;
    cfg.regress.folds = 3;
    cfg.regress.min_incidents_per_zone = 5;
    cfg.regress.models = {ModelKind::ols, ModelKind::tree};
    cfg.exclusion_min_share = 0.03; // 6 of 486 incidents is ~1.2%

    run_pipeline(cfg);

    auto models = nlohmann::json::parse(slurp(fs::path(cfg.outdir) / artifact::models));
    CHECK(models.at("k").get<int>() == 3);
    const auto& clusters = models.at("clusters");
    int retained = 0, dropped = 0;
    std::string dropped_id;
    for (const auto& [id, entry] : clusters.items()) {
        if (entry.at("retained").get<bool>()) {
            ++retained;
            CHECK(entry.at("share").get<double>() >= 0.03);
            CHECK(entry.contains("best"));
        } else {
            ++dropped;
            dropped_id = id;
            CHECK(entry.at("share").get<double>() < 0.03);
            CHECK(!entry.contains("best"));
        }
    }
    CHECK(retained == 2);
    CHECK(dropped == 1);

    // The dropped cluster stays visible in the signature report but not in
    // the response/r2 tables.
    auto response_report = slurp(fs::path(cfg.outdir) / artifact::report_cluster_response);
    auto r2_report = slurp(fs::path(cfg.outdir) / artifact::report_model_r2);
    auto mean_sig_report = slurp(fs::path(cfg.outdir) / artifact::report_cluster_mean_signatures);
    CHECK(response_report.find("\n" + dropped_id + ",") == std::string::npos);
    CHECK(r2_report.find("\n" + dropped_id + ",") == std::string::npos);
    CHECK(mean_sig_report.find("\n" + dropped_id + ",") != std::string::npos);

    // Predictions for the dropped cluster's zone carry the status marker.
    auto predictions = slurp(fs::path(cfg.outdir) / artifact::predictions);
    CHECK(predictions.find("20999") != std::string::npos);
    CHECK(predictions.find("no_model_for_cluster") != std::string::npos);
}

TEST_CASE("a model kind that cannot fit a cluster is reported as n/a") {
    // Every zone uses exactly two work types, so within a cluster the two
    // active shares sum to one and the linear design is rank deficient. The
    // tree has no such problem and must be selected for both clusters.
    std::vector<PermitRecord> permits;
    std::vector<IncidentRecord> incidents;
    Rng rng(29);
    auto add_zone = [&](const std::string& zone, WorkType major, int idx, double mean) {
        const int n_alt = 5 + idx;
        for (int i = 0; i < 40; ++i) {
            PermitRecord p;
            p.zone_id = zone;
            p.work_type = i < n_alt ? WorkType::alteration : major;
            p.start_date = Date{2014, 6, 1 + i % 27};
            permits.push_back(p);
        }
        for (int i = 0; i < 30; ++i)
            incidents.push_back(incident(zone, mean + 5.0 * rng.normal()));
    };
    for (int i = 0; i < 8; ++i)
        add_zone("301" + std::to_string(10 + i), WorkType::plumbing, i, 300.0 + 8.0 * i);
    for (int i = 0; i < 8; ++i)
        add_zone("302" + std::to_string(10 + i), WorkType::demolition, i, 450.0 + 8.0 * i);

    TempDir dir("rankdef");
    {
        std::ofstream p(dir.file("permits.csv"), std::ios::binary);
        write_permits_csv(p, permits);
        std::ofstream i(dir.file("incidents.csv"), std::ios::binary);
        write_incidents_csv(i, incidents);
    }
    PipelineConfig cfg = base_config();
    cfg.permits_path = dir.file("permits.csv");
    cfg.incidents_path = dir.file("incidents.csv");
    cfg.outdir = dir.file("out");
    cfg.cluster.k_min = 2;
    cfg.cluster.k_max = 4;
    cfg.cluster.restarts = 10;
    cfg.cluster.seed = 3;
    cfg.regress.folds = 4;
    cfg.regress.min_incidents_per_zone = 5;
    cfg.regress.models = {ModelKind::ols, ModelKind::tree};

    run_pipeline(cfg);

    auto models = nlohmann::json::parse(slurp(fs::path(cfg.outdir) / artifact::models));
    CHECK(models.at("k").get<int>() == 2);
    for (const auto& [id, entry] : models.at("clusters").items()) {
        REQUIRE(entry.at("retained").get<bool>());
        const auto& evals = entry.at("evals");
        CHECK(evals.at("ols").at("error").get<std::string>() == "singular_design");
        CHECK(!evals.at("ols").contains("r_squared"));
        CHECK(evals.at("tree").contains("r_squared"));
        CHECK(entry.at("best").get<std::string>() == "tree");
        CHECK(!entry.at("models").contains("ols"));
        CHECK(entry.at("models").contains("tree"));
    }

    auto eval_report = slurp(fs::path(cfg.outdir) / artifact::eval_report);
    CHECK(eval_report.find(",ols,n/a,error=singular_design") != std::string::npos);
    auto r2_report = slurp(fs::path(cfg.outdir) / artifact::report_model_r2);
    CHECK(r2_report.find(",ols,n/a") != std::string::npos);

    // Both clusters still carry a usable model, so every zone gets a number.
    auto predictions = slurp(fs::path(cfg.outdir) / artifact::predictions);
    CHECK(predictions.find("no_model_for_cluster") == std::string::npos);
}

TEST_CASE("empty incident input aborts at training and quarantines partials") {
    auto spec = pipeline_spec();
    spec.seed = 31;
    spec.n_zones = 20;
    CityFixture fx("noincidents", spec);
    write_file(fx.cfg.incidents_path, "zone_id,timestamp,response_time_s\n");

    try {
        run_pipeline(fx.cfg);
        FAIL("expected no_incidents");
    } catch (const Error& e) {
        CHECK(e.code() == "no_incidents");
        CHECK(e.message().find("stage train") != std::string::npos);
    }

    const fs::path out(fx.cfg.outdir);
    CHECK(fs::exists(out / "quarantine"));
    CHECK(fs::exists(out / "quarantine" / artifact::signatures));
    CHECK(!fs::exists(out / artifact::signatures));
    CHECK(!fs::exists(out / artifact::manifest));
}

TEST_CASE("missing input file fails with the ingest stage tag") {
    TempDir dir("missing");
    PipelineConfig cfg = base_config();
    cfg.permits_path = dir.file("absent.csv");
    cfg.incidents_path = dir.file("absent2.csv");
    cfg.outdir = dir.file("out");
    try {
        run_pipeline(cfg);
        FAIL("expected io_error");
    } catch (const Error& e) {
        CHECK(e.code() == "io_error");
        CHECK(e.message().find("stage ingest") != std::string::npos);
    }
}
