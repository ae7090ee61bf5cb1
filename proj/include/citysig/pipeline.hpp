#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "citysig/date.hpp"
#include "citysig/ingest.hpp"
#include "citysig/kmeans.hpp"
#include "citysig/records.hpp"
#include "citysig/regress.hpp"
#include "citysig/signature.hpp"

#include "json.hpp"

namespace citysig {

inline constexpr const char* kVersion = "1.0.0";

struct ClusterConfig {
    int k_min = 2;
    int k_max = 10;
    int restarts = 100;
    int max_iters = 300;
    double tol = 1e-6;
    uint64_t seed = 42;
    InitScheme init = InitScheme::kmeanspp;
};

struct RegressConfig {
    int folds = 5;
    int min_incidents_per_zone = 10;
    std::vector<ModelKind> models{ModelKind::ols, ModelKind::tree, ModelKind::forest};
};

struct PipelineConfig {
    std::string permits_path;
    std::string incidents_path;
    std::string permits_mapping_path;
    std::string incidents_mapping_path;
    DateWindow window{{2013, 1, 1}, {2017, 12, 31}};
    WindowMode permit_window_mode = WindowMode::start_date;
    ClusterConfig cluster;
    RegressConfig regress;
    // Clusters holding less than this share of all accepted incidents are
    // dropped from regression (they still appear in cluster reports).
    double exclusion_min_share = 0.03;
    std::string outdir;

    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig load(const std::string& path);
    nlohmann::json to_json() const; // every field explicit, keys sorted
    void validate() const;
};

uint64_t fnv1a64(std::string_view text);

struct ZoneResponse {
    std::string zone_id;
    double mean_s = 0.0;
    uint64_t count = 0;
    bool included = false; // count >= min_count
};

// Per-zone mean response, sorted by zone id.
std::vector<ZoneResponse> aggregate_response(std::span<const IncidentRecord> incidents,
                                             uint64_t min_count);

void write_response_csv(std::ostream& out, std::span<const ZoneResponse> rows);
std::vector<ZoneResponse> read_response_csv(std::istream& in);

struct PredictionResult {
    int cluster = 0;
    std::optional<double> predicted_s; // empty: no model for the cluster
};

// Nearest centroid (lowest index on ties), then that cluster's best model.
PredictionResult predict_zone(const Vec8& signature, std::span<const Vec8> centroids,
                              const std::map<int, AnyModel>& best_models);

// Artifact file names under the output directory.
namespace artifact {
inline constexpr const char* permits_clean = "permits_clean.csv";
inline constexpr const char* incidents_clean = "incidents_clean.csv";
inline constexpr const char* rejected_permits = "rejected_permits.csv";
inline constexpr const char* rejected_incidents = "rejected_incidents.csv";
inline constexpr const char* ingest_permits_report = "ingest_permits.json";
inline constexpr const char* ingest_incidents_report = "ingest_incidents.json";
inline constexpr const char* signatures = "signatures.csv";
inline constexpr const char* response = "response.csv";
inline constexpr const char* ksweep = "ksweep.csv";
inline constexpr const char* clusters = "clusters.csv";
inline constexpr const char* clusters_meta = "clusters_meta.json";
inline constexpr const char* models = "models.json";
inline constexpr const char* eval_report = "eval_report.csv";
inline constexpr const char* predictions = "predictions.csv";
inline constexpr const char* report_signatures_pct = "report_signatures_pct.csv";
inline constexpr const char* report_cluster_response = "report_cluster_response.csv";
inline constexpr const char* report_model_r2 = "report_model_r2.csv";
inline constexpr const char* report_cluster_mean_signatures = "report_cluster_mean_signatures.csv";
inline constexpr const char* manifest = "manifest.json";
} // namespace artifact

// Each stage reads its inputs (raw paths or earlier artifacts in outdir)
// and writes its own artifacts into outdir.
void stage_ingest(const PipelineConfig& cfg);
void stage_signatures(const PipelineConfig& cfg);
void stage_cluster(const PipelineConfig& cfg);
void stage_train(const PipelineConfig& cfg);
void stage_predict(const PipelineConfig& cfg);
void stage_report(const PipelineConfig& cfg);

// All stages in order. On a fatal error the partial artifacts are moved to
// outdir/quarantine and the stage-tagged error rethrown.
void run_pipeline(const PipelineConfig& cfg);

} // namespace citysig
