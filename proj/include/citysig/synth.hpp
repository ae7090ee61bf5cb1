#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "citysig/records.hpp"
#include "citysig/signature.hpp"

namespace citysig {

enum class ResponseFamily { linear, step };

struct ResponseFn {
    ResponseFamily family = ResponseFamily::linear;
    double base = 300.0; // seconds
    Vec8 weights{};      // linear: base + weights . signature
    // step: base + delta when new_building + demolition proportion > threshold
    double delta = 120.0;
    double threshold = 0.3;
};

double true_mean_response(const ResponseFn& fn, const Vec8& signature);

struct CountRange {
    int lo = 0;
    int hi = 0; // inclusive
};

struct SyntheticSpec {
    int n_zones = 150;
    int n_clusters = 5;
    // Sharpness of the per-cluster signature distribution around its
    // prototype; higher is tighter. May be infinity (zones sit exactly on
    // their prototype).
    double concentration = 300.0;
    CountRange permits_per_zone{100, 200};
    CountRange incidents_per_zone{20, 40};
    ResponseFn response;
    double noise_sd = 30.0; // seconds
    uint64_t seed = 0;
};

struct ZoneTruth {
    std::string zone_id;
    int true_cluster = 0;
    Vec8 true_signature{};
    double true_mean_response = 0.0;
};

struct SyntheticCity {
    std::vector<PermitRecord> permits;
    std::vector<IncidentRecord> incidents;
    std::vector<ZoneTruth> truth; // one entry per zone, sorted by zone_id
};

// Deterministic given spec.seed. Prototypes are drawn maximin-separated on
// the simplex; infeasible separation throws "cannot_separate".
SyntheticCity generate(const SyntheticSpec& spec);

// Best-match accuracy over cluster-label bijections: the fraction of zones
// whose predicted label equals the truth under the best relabeling.
// zone_ids[i] is the zone behind assignments[i].
double score_recovery(std::span<const ZoneTruth> truth, std::span<const std::string> zone_ids,
                      std::span<const int> assignments);

void write_truth_csv(std::ostream& out, std::span<const ZoneTruth> truth);
std::vector<ZoneTruth> read_truth_csv(std::istream& in);

} // namespace citysig
