#include "citysig/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "citysig/csv.hpp"
#include "citysig/date.hpp"
#include "citysig/error.hpp"
#include "citysig/rng.hpp"

namespace citysig {

double true_mean_response(const ResponseFn& fn, const Vec8& signature) {
    if (fn.family == ResponseFamily::linear) {
        double y = fn.base;
        for (size_t d = 0; d < signature.size(); ++d) y += fn.weights[d] * signature[d];
        return y;
    }
    const double exterior = signature[static_cast<size_t>(WorkType::new_building)] +
                            signature[static_cast<size_t>(WorkType::demolition)];
    return fn.base + (exterior > fn.threshold ? fn.delta : 0.0);
}

namespace {

constexpr Date kSynthFirst{2013, 1, 1};
constexpr Date kSynthLast{2017, 12, 31};

double sq_dist(const Vec8& a, const Vec8& b) {
    double s = 0.0;
    for (size_t d = 0; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

Vec8 uniform_simplex(Rng& rng) {
    // Normalized exponentials give a flat Dirichlet.
    Vec8 v;
    double total = 0.0;
    for (double& x : v) {
        x = -std::log(1.0 - rng.uniform01());
        total += x;
    }
    for (double& x : v) x /= total;
    return v;
}

// Greedy maximin selection of n_clusters prototypes from a fixed pool.
std::vector<Vec8> draw_prototypes(int n_clusters, double concentration, Rng& rng) {
    constexpr size_t kPoolSize = 256;
    std::vector<Vec8> pool(kPoolSize);
    for (auto& p : pool) p = uniform_simplex(rng);

    std::vector<Vec8> chosen;
    chosen.push_back(pool[0]);
    std::vector<double> nearest(kPoolSize);
    for (size_t i = 0; i < kPoolSize; ++i) nearest[i] = sq_dist(pool[i], chosen[0]);

    while (chosen.size() < static_cast<size_t>(n_clusters)) {
        size_t far = 0;
        for (size_t i = 1; i < kPoolSize; ++i)
            if (nearest[i] > nearest[far]) far = i;
        chosen.push_back(pool[far]);
        for (size_t i = 0; i < kPoolSize; ++i)
            nearest[i] = std::min(nearest[i], sq_dist(pool[i], chosen.back()));
    }

    // Spread must dominate the per-cluster sampling noise, which shrinks
    // like 1/sqrt(concentration).
    const double floor = std::min(0.35, 3.0 / std::sqrt(std::isinf(concentration)
                                                            ? std::numeric_limits<double>::max()
                                                            : concentration + 1.0));
    for (size_t a = 0; a < chosen.size(); ++a)
        for (size_t b = a + 1; b < chosen.size(); ++b)
            if (std::sqrt(sq_dist(chosen[a], chosen[b])) < floor)
                throw_config("cannot_separate",
                             "cannot place " + std::to_string(n_clusters) +
                                 " prototypes with pairwise separation >= " + std::to_string(floor));
    return chosen;
}

Vec8 dirichlet_near(const Vec8& prototype, double concentration, Rng& rng) {
    if (std::isinf(concentration)) return prototype;
    Vec8 draw;
    double total = 0.0;
    for (size_t d = 0; d < draw.size(); ++d) {
        draw[d] = rng.gamma(concentration * prototype[d]);
        total += draw[d];
    }
    if (total <= 0.0) return prototype;
    for (double& x : draw) x /= total;
    return draw;
}

struct ZoneData {
    std::vector<PermitRecord> permits;
    std::vector<IncidentRecord> incidents;
    ZoneTruth truth;
};

} // namespace

SyntheticCity generate(const SyntheticSpec& spec) {
    if (spec.n_zones < 1) throw_config("bad_config", "n_zones must be at least 1");
    if (spec.n_zones > 89999)
        throw_config("bad_config", "n_zones exceeds the 5-digit zone id space");
    if (spec.n_clusters < 1 || spec.n_clusters > spec.n_zones)
        throw_config("bad_config", "need 1 <= n_clusters <= n_zones");
    if (!(spec.concentration > 0.0)) throw_config("bad_config", "concentration must be positive");
    if (spec.noise_sd < 0.0) throw_config("bad_config", "noise_sd must be non-negative");
    if (spec.permits_per_zone.lo < 1 || spec.permits_per_zone.hi < spec.permits_per_zone.lo)
        throw_config("bad_config", "permits_per_zone range must satisfy 1 <= lo <= hi");
    if (spec.incidents_per_zone.lo < 0 || spec.incidents_per_zone.hi < spec.incidents_per_zone.lo)
        throw_config("bad_config", "incidents_per_zone range must satisfy 0 <= lo <= hi");

    Rng proto_rng(mix_seed(spec.seed, 0));
    const std::vector<Vec8> prototypes = draw_prototypes(spec.n_clusters, spec.concentration, proto_rng);

    const long first_day = days_from_civil(kSynthFirst);
    const long n_days = days_from_civil(kSynthLast) - first_day + 1;

    const size_t n = static_cast<size_t>(spec.n_zones);
    std::vector<ZoneData> zones(n);
    std::vector<std::exception_ptr> failures(n);

#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < n; ++i) {
        try {
            ZoneData& z = zones[i];
            Rng rng(mix_seed(spec.seed, 1 + i));
            const int cluster = static_cast<int>(i) % spec.n_clusters;
            const Vec8 theta = dirichlet_near(prototypes[static_cast<size_t>(cluster)],
                                              spec.concentration, rng);

            z.truth.zone_id = std::to_string(10001 + static_cast<int>(i));
            z.truth.true_cluster = cluster;
            z.truth.true_signature = theta;
            const double mu = true_mean_response(spec.response, theta);
            if (!(mu >= 0.0))
                throw_config("bad_config", "response function yields a negative mean for zone " +
                                               z.truth.zone_id);
            z.truth.true_mean_response = mu;

            const int n_permits = spec.permits_per_zone.lo +
                                  static_cast<int>(rng.below(static_cast<uint64_t>(
                                      spec.permits_per_zone.hi - spec.permits_per_zone.lo + 1)));
            z.permits.reserve(static_cast<size_t>(n_permits));
            for (int p = 0; p < n_permits; ++p) {
                const double u = rng.uniform01();
                double acc = 0.0;
                size_t type = kWorkTypeCount - 1;
                for (size_t t = 0; t < kWorkTypeCount; ++t) {
                    acc += theta[t];
                    if (u < acc) {
                        type = t;
                        break;
                    }
                }
                PermitRecord rec;
                rec.zone_id = z.truth.zone_id;
                rec.work_type = static_cast<WorkType>(type);
                rec.start_date = civil_from_days(first_day +
                                                 static_cast<long>(rng.below(static_cast<uint64_t>(n_days))));
                rec.expiration_date = add_days(rec.start_date, static_cast<long>(rng.below(366)));
                z.permits.push_back(std::move(rec));
            }

            const int n_incidents = spec.incidents_per_zone.lo +
                                    static_cast<int>(rng.below(static_cast<uint64_t>(
                                        spec.incidents_per_zone.hi - spec.incidents_per_zone.lo + 1)));
            z.incidents.reserve(static_cast<size_t>(n_incidents));
            for (int q = 0; q < n_incidents; ++q) {
                double t = mu + spec.noise_sd * rng.normal();
                int guard = 0;
                while (t < 0.0) {
                    if (++guard > 10000)
                        throw_internal("internal_error", "truncated noise rejection stalled");
                    t = mu + spec.noise_sd * rng.normal();
                }
                DateTime ts;
                ts.date = civil_from_days(first_day +
                                          static_cast<long>(rng.below(static_cast<uint64_t>(n_days))));
                ts.hour = static_cast<int>(rng.below(24));
                ts.minute = static_cast<int>(rng.below(60));
                ts.second = static_cast<int>(rng.below(60));
                z.incidents.push_back(IncidentRecord{z.truth.zone_id, ts, t});
            }
        } catch (...) {
            failures[i] = std::current_exception();
        }
    }
    for (const auto& f : failures)
        if (f) std::rethrow_exception(f);

    SyntheticCity city;
    for (auto& z : zones) {
        city.permits.insert(city.permits.end(), std::make_move_iterator(z.permits.begin()),
                            std::make_move_iterator(z.permits.end()));
        city.incidents.insert(city.incidents.end(), std::make_move_iterator(z.incidents.begin()),
                              std::make_move_iterator(z.incidents.end()));
        city.truth.push_back(std::move(z.truth));
    }
    return city;
}

double score_recovery(std::span<const ZoneTruth> truth, std::span<const std::string> zone_ids,
                      std::span<const int> assignments) {
    if (zone_ids.size() != assignments.size())
        throw_internal("internal_error", "zone/assignment count mismatch");
    if (truth.size() != zone_ids.size())
        throw_data("bad_mapping", "truth and clustering cover different zone counts");

    std::vector<std::pair<std::string_view, int>> predicted;
    predicted.reserve(zone_ids.size());
    for (size_t i = 0; i < zone_ids.size(); ++i) predicted.emplace_back(zone_ids[i], assignments[i]);
    std::sort(predicted.begin(), predicted.end());

    std::vector<std::pair<std::string_view, int>> actual;
    actual.reserve(truth.size());
    for (const auto& t : truth) actual.emplace_back(t.zone_id, t.true_cluster);
    std::sort(actual.begin(), actual.end());

    int k_true = 0, k_pred = 0;
    for (size_t i = 0; i < actual.size(); ++i) {
        if (actual[i].first != predicted[i].first)
            throw_data("bad_mapping", "truth and clustering cover different zones");
        k_true = std::max(k_true, actual[i].second + 1);
        k_pred = std::max(k_pred, predicted[i].second + 1);
    }

    const int k = std::max(k_true, k_pred);
    if (k > 20) throw_config("bad_config", "recovery scoring supports at most 20 clusters");
    if (k < 1) throw_data("bad_mapping", "no clusters to score");

    // Confusion counts, then the best bijection by bitmask DP over columns.
    std::vector<uint64_t> confusion(static_cast<size_t>(k) * static_cast<size_t>(k), 0);
    for (size_t i = 0; i < actual.size(); ++i)
        ++confusion[static_cast<size_t>(actual[i].second) * static_cast<size_t>(k) +
                    static_cast<size_t>(predicted[i].second)];

    std::vector<uint64_t> dp(size_t{1} << k, 0);
    for (uint64_t mask = 1; mask < dp.size(); ++mask) {
        const int row = std::popcount(mask) - 1;
        uint64_t best = 0;
        for (int col = 0; col < k; ++col) {
            if (!(mask >> col & 1)) continue;
            const uint64_t prev = dp[mask & ~(uint64_t{1} << col)];
            best = std::max(best, prev + confusion[static_cast<size_t>(row) * static_cast<size_t>(k) +
                                                   static_cast<size_t>(col)]);
        }
        dp[mask] = best;
    }
    return static_cast<double>(dp.back()) / static_cast<double>(actual.size());
}

void write_truth_csv(std::ostream& out, std::span<const ZoneTruth> truth) {
    CsvWriter w(out);
    std::vector<std::string> header{"zone_id", "true_cluster", "true_mean_response"};
    for (auto name : kWorkTypeNames) header.emplace_back(name);
    w.write_row(header);
    for (const auto& t : truth) {
        std::vector<std::string> row{t.zone_id, std::to_string(t.true_cluster),
                                     format_double(t.true_mean_response)};
        for (double v : t.true_signature) row.push_back(format_double(v));
        w.write_row(row);
    }
}

std::vector<ZoneTruth> read_truth_csv(std::istream& in) {
    CsvReader reader(in);
    auto header = reader.next();
    const size_t expected = 3 + kWorkTypeCount;
    if (!header || header->size() != expected || (*header)[0] != "zone_id")
        throw_data("bad_row", "unexpected truth header");
    std::vector<ZoneTruth> out;
    while (auto row = reader.next()) {
        if (row->size() != expected) throw_data("bad_row", "truth row has wrong column count");
        ZoneTruth t;
        t.zone_id = (*row)[0];
        auto cluster = parse_int((*row)[1]);
        auto mean = parse_double((*row)[2]);
        if (!cluster || *cluster < 0 || !mean) throw_data("bad_row", "bad truth row for zone " + t.zone_id);
        t.true_cluster = static_cast<int>(*cluster);
        t.true_mean_response = *mean;
        for (size_t d = 0; d < kWorkTypeCount; ++d) {
            auto v = parse_double((*row)[3 + d]);
            if (!v) throw_data("bad_row", "bad truth signature for zone " + t.zone_id);
            t.true_signature[d] = *v;
        }
        out.push_back(std::move(t));
    }
    std::sort(out.begin(), out.end(),
              [](const ZoneTruth& a, const ZoneTruth& b) { return a.zone_id < b.zone_id; });
    return out;
}

} // namespace citysig
