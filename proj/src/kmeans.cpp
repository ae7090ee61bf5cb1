#include "citysig/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "citysig/csv.hpp"
#include "citysig/error.hpp"
#include "citysig/rng.hpp"

namespace citysig {

const char* init_scheme_name(InitScheme s) {
    return s == InitScheme::kmeanspp ? "kmeanspp" : "uniform";
}

InitScheme init_scheme_from_name(std::string_view name) {
    if (name == "kmeanspp") return InitScheme::kmeanspp;
    if (name == "uniform") return InitScheme::uniform;
    throw_config("bad_config", "unknown init scheme: " + std::string(name));
}

nlohmann::json ClusteringModel::to_json() const {
    nlohmann::json cents = nlohmann::json::array();
    for (const auto& c : centroids) cents.push_back(std::vector<double>(c.begin(), c.end()));
    return {{"k", k},
            {"centroids", cents},
            {"assignments", assignments},
            {"inertia", inertia},
            {"silhouette", silhouette},
            {"seed_used", seed_used},
            {"iterations_run", iterations_run},
            {"inertia_history", inertia_history}};
}

ClusteringModel ClusteringModel::from_json(const nlohmann::json& j) {
    ClusteringModel m;
    m.k = j.at("k").get<int>();
    for (const auto& row : j.at("centroids")) {
        auto v = row.get<std::vector<double>>();
        if (v.size() != kWorkTypeCount) throw_data("bad_row", "centroid has wrong dimension");
        Vec8 c;
        std::copy(v.begin(), v.end(), c.begin());
        m.centroids.push_back(c);
    }
    m.assignments = j.at("assignments").get<std::vector<int>>();
    m.inertia = j.at("inertia").get<double>();
    m.silhouette = j.at("silhouette").get<double>();
    m.seed_used = j.at("seed_used").get<uint64_t>();
    m.iterations_run = j.at("iterations_run").get<int>();
    m.inertia_history = j.at("inertia_history").get<std::vector<double>>();
    return m;
}

namespace {

double sq_dist(const Vec8& a, const Vec8& b) {
    double s = 0.0;
    for (size_t d = 0; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

std::vector<Vec8> init_uniform(std::span<const Vec8> points, int k, Rng& rng) {
    // Partial Fisher-Yates over point indices; k distinct picks.
    std::vector<size_t> idx(points.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<Vec8> centroids;
    centroids.reserve(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c) {
        const size_t pick = static_cast<size_t>(c) + rng.below(idx.size() - static_cast<size_t>(c));
        std::swap(idx[static_cast<size_t>(c)], idx[pick]);
        centroids.push_back(points[idx[static_cast<size_t>(c)]]);
    }
    return centroids;
}

std::vector<Vec8> init_kmeanspp(std::span<const Vec8> points, int k, Rng& rng) {
    const size_t n = points.size();
    std::vector<Vec8> centroids;
    centroids.reserve(static_cast<size_t>(k));
    centroids.push_back(points[rng.below(n)]);

    std::vector<double> d2(n);
    std::vector<char> chosen(n, 0);
    while (centroids.size() < static_cast<size_t>(k)) {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double best = sq_dist(points[i], centroids[0]);
            for (size_t c = 1; c < centroids.size(); ++c)
                best = std::min(best, sq_dist(points[i], centroids[c]));
            d2[i] = best;
            total += best;
        }
        size_t pick = n;
        if (total > 0.0) {
            const double r = rng.uniform01() * total;
            double acc = 0.0;
            for (size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) pick = n - 1; // guard against accumulated rounding
        } else {
            // All points coincide with chosen centroids; take the lowest
            // index not yet used so centroids stay deterministic.
            for (size_t i = 0; i < n; ++i)
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
            if (pick == n) pick = 0;
        }
        chosen[pick] = 1;
        centroids.push_back(points[pick]);
    }
    return centroids;
}

} // namespace

ClusteringModel lloyd(const SignatureMatrix& m, int k, uint64_t seed, int max_iters, double tol,
                      InitScheme init) {
    const size_t n = m.size();
    if (k < 1) throw_config("bad_config", "k must be at least 1");
    if (max_iters < 1) throw_config("bad_config", "max_iters must be at least 1");
    if (tol < 0.0) throw_config("bad_config", "convergence_tol must be non-negative");
    if (static_cast<size_t>(k) > n)
        throw_data("k_exceeds_points",
                   "k=" + std::to_string(k) + " exceeds row count " + std::to_string(n));

    std::span<const Vec8> points(m.rows);
    Rng rng(seed);
    std::vector<Vec8> centroids =
        init == InitScheme::kmeanspp ? init_kmeanspp(points, k, rng) : init_uniform(points, k, rng);

    std::vector<int> assignments(n, -1);
    std::vector<int> previous(n, -1);
    std::vector<double> point_costs(n, 0.0);
    std::vector<double> history;
    int iterations = 0;

    for (int iter = 0; iter < max_iters; ++iter) {
        iterations = iter + 1;
        previous.swap(assignments);

        // Assignment: nearest centroid by squared distance, lowest index wins
        // ties. Rows are independent.
#pragma omp parallel for schedule(static)
        for (size_t i = 0; i < n; ++i) {
            double best = sq_dist(points[i], centroids[0]);
            int best_c = 0;
            for (int c = 1; c < k; ++c) {
                const double d = sq_dist(points[i], centroids[static_cast<size_t>(c)]);
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            assignments[i] = best_c;
        }

        std::vector<size_t> counts(static_cast<size_t>(k), 0);
        for (int a : assignments) ++counts[static_cast<size_t>(a)];

        // Empty-cluster repair: seed each empty cluster with the point
        // farthest from its centroid, lowest index on ties, never draining
        // a cluster below one member.
        bool repaired = false;
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) continue;
            double far_d = -1.0;
            size_t far_i = n;
            for (size_t i = 0; i < n; ++i) {
                if (counts[static_cast<size_t>(assignments[i])] < 2) continue;
                const double d = sq_dist(points[i], centroids[static_cast<size_t>(assignments[i])]);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            if (far_i == n) throw_internal("internal_error", "empty-cluster repair found no donor");
            --counts[static_cast<size_t>(assignments[far_i])];
            assignments[far_i] = c;
            ++counts[static_cast<size_t>(c)];
            repaired = true;
        }

        // Update: per-cluster means, each accumulated serially in row order
        // so the result does not depend on the thread count.
        std::vector<Vec8> updated(static_cast<size_t>(k), Vec8{});
#pragma omp parallel for schedule(static)
        for (int c = 0; c < k; ++c) {
            Vec8 sum{};
            for (size_t i = 0; i < n; ++i) {
                if (assignments[i] != c) continue;
                for (size_t d = 0; d < sum.size(); ++d) sum[d] += points[i][d];
            }
            for (size_t d = 0; d < sum.size(); ++d)
                updated[static_cast<size_t>(c)][d] = sum[d] / static_cast<double>(counts[static_cast<size_t>(c)]);
        }

        double max_move = 0.0;
        for (int c = 0; c < k; ++c)
            max_move = std::max(max_move, std::sqrt(sq_dist(updated[static_cast<size_t>(c)],
                                                            centroids[static_cast<size_t>(c)])));
        centroids.swap(updated);

#pragma omp parallel for schedule(static)
        for (size_t i = 0; i < n; ++i)
            point_costs[i] = sq_dist(points[i], centroids[static_cast<size_t>(assignments[i])]);
        history.push_back(pairwise_sum(point_costs));

        if (!repaired && assignments == previous) break;
        if (max_move < tol) break;
    }

    ClusteringModel model;
    model.k = k;
    model.centroids = std::move(centroids);
    model.assignments = std::move(assignments);
    model.inertia = history.back();
    model.seed_used = seed;
    model.iterations_run = iterations;
    model.inertia_history = std::move(history);
    return model;
}

double silhouette_score(const SignatureMatrix& m, std::span<const int> assignments) {
    const size_t n = m.size();
    if (assignments.size() != n)
        throw_internal("internal_error", "assignment count does not match row count");

    int k = 0;
    for (int a : assignments) {
        if (a < 0) throw_internal("internal_error", "negative cluster label");
        k = std::max(k, a + 1);
    }
    std::vector<size_t> counts(static_cast<size_t>(k), 0);
    for (int a : assignments) ++counts[static_cast<size_t>(a)];
    if (k < 2)
        throw_data("silhouette_undefined", "silhouette needs at least 2 clusters");
    if (static_cast<size_t>(k) >= n)
        throw_data("silhouette_undefined", "silhouette needs at most n-1 clusters");
    for (int c = 0; c < k; ++c)
        if (counts[static_cast<size_t>(c)] == 0)
            throw_data("silhouette_undefined", "cluster " + std::to_string(c) + " is empty");

    std::span<const Vec8> points(m.rows);
    std::vector<double> s(n, 0.0);

#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) {
        const int own = assignments[i];
        if (counts[static_cast<size_t>(own)] == 1) {
            s[i] = 0.0;
            continue;
        }
        std::vector<double> dist_sum(static_cast<size_t>(k), 0.0);
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            dist_sum[static_cast<size_t>(assignments[j])] += std::sqrt(sq_dist(points[i], points[j]));
        }
        const double c = dist_sum[static_cast<size_t>(own)] /
                         static_cast<double>(counts[static_cast<size_t>(own)] - 1);
        double o = std::numeric_limits<double>::infinity();
        for (int g = 0; g < k; ++g) {
            if (g == own) continue;
            o = std::min(o, dist_sum[static_cast<size_t>(g)] / static_cast<double>(counts[static_cast<size_t>(g)]));
        }
        const double denom = std::max(c, o);
        s[i] = denom > 0.0 ? (o - c) / denom : 0.0;
    }
    return pairwise_sum(s) / static_cast<double>(n);
}

ClusteringModel kmeans_best_of(const SignatureMatrix& m, const KMeansParams& params) {
    if (params.restarts < 1) throw_config("bad_config", "restarts must be at least 1");

    const int restarts = params.restarts;
    std::vector<ClusteringModel> models(static_cast<size_t>(restarts));
    std::vector<std::exception_ptr> failures(static_cast<size_t>(restarts));

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < restarts; ++i) {
        try {
            ClusteringModel run = lloyd(m, params.k, mix_seed(params.seed, static_cast<uint64_t>(i)),
                                        params.max_iters, params.convergence_tol, params.init);
            run.silhouette = silhouette_score(m, run.assignments);
            models[static_cast<size_t>(i)] = std::move(run);
        } catch (...) {
            failures[static_cast<size_t>(i)] = std::current_exception();
        }
    }
    for (const auto& f : failures)
        if (f) std::rethrow_exception(f);

    size_t best = 0;
    for (size_t i = 1; i < models.size(); ++i) {
        if (models[i].silhouette > models[best].silhouette ||
            (models[i].silhouette == models[best].silhouette && models[i].inertia < models[best].inertia))
            best = i;
    }
    return std::move(models[best]);
}

KSweepReport sweep_k(const SignatureMatrix& m, int k_min, int k_max, const KMeansParams& tmpl) {
    if (k_min < 2) throw_config("bad_config", "sweep k_min must be at least 2");
    if (k_max < k_min)
        throw_data("empty_sweep", "sweep k_max " + std::to_string(k_max) + " is below k_min " +
                                      std::to_string(k_min));
    if (m.size() < 3) throw_data("empty_sweep", "sweep needs at least 3 rows");

    KSweepReport report;
    const int hard_max = static_cast<int>(m.size()) - 1;
    report.effective_k_max = std::min(k_max, hard_max);
    report.clamped = k_max > hard_max;
    if (k_min > report.effective_k_max)
        throw_data("empty_sweep", "no k in [" + std::to_string(k_min) + ", " +
                                      std::to_string(report.effective_k_max) + "]");

    for (int k = k_min; k <= report.effective_k_max; ++k) {
        KMeansParams p = tmpl;
        p.k = k;
        p.seed = mix_seed(tmpl.seed, static_cast<uint64_t>(k));
        ClusteringModel best = kmeans_best_of(m, p);
        report.entries.push_back(KSweepEntry{k, best.silhouette, best.inertia, best.seed_used});
    }

    size_t sel = 0;
    for (size_t i = 1; i < report.entries.size(); ++i)
        if (report.entries[i].best_silhouette > report.entries[sel].best_silhouette) sel = i;
    report.selected_k = report.entries[sel].k;
    return report;
}

void write_clusters_csv(std::ostream& out, std::span<const std::string> zone_ids,
                        std::span<const int> assignments) {
    if (zone_ids.size() != assignments.size())
        throw_internal("internal_error", "zone/assignment count mismatch");
    CsvWriter w(out);
    w.write_row({"zone_id", "cluster"});
    for (size_t i = 0; i < zone_ids.size(); ++i)
        w.write_row({zone_ids[i], std::to_string(assignments[i])});
}

std::pair<std::vector<std::string>, std::vector<int>> read_clusters_csv(std::istream& in) {
    CsvReader reader(in);
    auto header = reader.next();
    if (!header || header->size() != 2 || (*header)[0] != "zone_id" || (*header)[1] != "cluster")
        throw_data("bad_row", "unexpected clusters header");
    std::vector<std::pair<std::string, int>> rows;
    while (auto row = reader.next()) {
        if (row->size() != 2) throw_data("bad_row", "clusters row has wrong column count");
        auto cluster = parse_int((*row)[1]);
        if (!cluster || *cluster < 0) throw_data("bad_row", "bad cluster id for zone " + (*row)[0]);
        rows.emplace_back((*row)[0], static_cast<int>(*cluster));
    }
    std::sort(rows.begin(), rows.end());
    std::pair<std::vector<std::string>, std::vector<int>> out;
    for (auto& [zone, cluster] : rows) {
        out.first.push_back(std::move(zone));
        out.second.push_back(cluster);
    }
    return out;
}

void write_ksweep_csv(std::ostream& out, const KSweepReport& report) {
    CsvWriter w(out);
    w.write_row({"k", "best_silhouette", "best_inertia", "winning_seed"});
    for (const auto& e : report.entries)
        w.write_row({std::to_string(e.k), format_double(e.best_silhouette),
                     format_double(e.best_inertia), std::to_string(e.winning_seed)});
}

} // namespace citysig
