#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "citysig/signature.hpp"

#include "json.hpp"

namespace citysig {

enum class InitScheme { kmeanspp, uniform };

const char* init_scheme_name(InitScheme s);
InitScheme init_scheme_from_name(std::string_view name);

struct KMeansParams {
    int k = 2;
    int restarts = 100;
    int max_iters = 300;
    double convergence_tol = 1e-6;
    uint64_t seed = 0;
    InitScheme init = InitScheme::kmeanspp;
};

struct ClusteringModel {
    int k = 0;
    std::vector<Vec8> centroids;  // k rows
    std::vector<int> assignments; // one per input row, values in [0, k)
    double inertia = 0.0;
    double silhouette = std::numeric_limits<double>::quiet_NaN();
    uint64_t seed_used = 0;
    int iterations_run = 0;
    // Inertia recorded after each assign+update iteration; non-increasing.
    std::vector<double> inertia_history;

    nlohmann::json to_json() const;
    static ClusteringModel from_json(const nlohmann::json& j);
};

// One Lloyd run from a seeded initialization. The silhouette field is left
// unset (NaN). Throws "k_exceeds_points" when k > n_rows.
ClusteringModel lloyd(const SignatureMatrix& m, int k, uint64_t seed, int max_iters = 300,
                      double tol = 1e-6, InitScheme init = InitScheme::kmeanspp);

// Mean silhouette width of a partition. k is inferred as max(assignment)+1.
// Throws "silhouette_undefined" when k < 2, k = n, or a label in [0, k) is
// unused. Singleton clusters contribute s(i) = 0.
double silhouette_score(const SignatureMatrix& m, std::span<const int> assignments);

// Best of params.restarts Lloyd runs, scored by silhouette (ties go to the
// lower inertia, then the lower restart index). Restart i uses seed
// mix_seed(params.seed, i).
ClusteringModel kmeans_best_of(const SignatureMatrix& m, const KMeansParams& params);

struct KSweepEntry {
    int k = 0;
    double best_silhouette = 0.0;
    double best_inertia = 0.0;
    uint64_t winning_seed = 0;
};

struct KSweepReport {
    std::vector<KSweepEntry> entries;
    int selected_k = 0;
    // k_max was reduced to n_rows - 1.
    bool clamped = false;
    int effective_k_max = 0;
};

// One kmeans_best_of per k in [k_min, min(k_max, n-1)], each with seed
// mix_seed(tmpl.seed, k). selected_k maximizes silhouette, ties to smaller k.
KSweepReport sweep_k(const SignatureMatrix& m, int k_min, int k_max, const KMeansParams& tmpl);

void write_clusters_csv(std::ostream& out, std::span<const std::string> zone_ids,
                        std::span<const int> assignments);
// Returns (zone_ids, assignments), sorted by zone id.
std::pair<std::vector<std::string>, std::vector<int>> read_clusters_csv(std::istream& in);

void write_ksweep_csv(std::ostream& out, const KSweepReport& report);

} // namespace citysig
