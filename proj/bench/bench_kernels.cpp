// Times the production kernels against the serial reference implementations
// on synthetic inputs. Every row checks agreement before it reports a ratio,
// so a numerical regression on either side fails the run instead of just
// skewing a number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#else
static int omp_get_max_threads() { return 1; }
#endif

#include "CLI11.hpp"

#include "citysig/kmeans.hpp"
#include "citysig/reference.hpp"
#include "citysig/regress.hpp"
#include "citysig/rng.hpp"
#include "citysig/signature.hpp"

namespace {

using namespace citysig;

using clock_type = std::chrono::steady_clock;

// Best wall time over reps runs of fn; the result of the last run is kept
// alive by the caller through captured references.
template <typename Fn>
double best_ms(int reps, Fn&& fn) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < reps; ++r) {
        const auto t0 = clock_type::now();
        fn();
        const auto t1 = clock_type::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

// Well-separated mixture in signature space: k centers, tight normal spread,
// rows renormalized to sum 1. Point i belongs to cluster i % k so any prefix
// covers every label.
SignatureMatrix mixture(size_t n, int k, double spread, uint64_t seed) {
    std::vector<Vec8> centers(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c) {
        Vec8 v;
        v.fill(0.05);
        v[static_cast<size_t>(c) % kWorkTypeCount] += 0.55;
        v[static_cast<size_t>(c + 3) % kWorkTypeCount] += 0.15;
        double s = 0.0;
        for (double x : v) s += x;
        for (double& x : v) x /= s;
        centers[static_cast<size_t>(c)] = v;
    }

    Rng rng(seed);
    SignatureMatrix m;
    char buf[32];
    for (size_t i = 0; i < n; ++i) {
        Vec8 p = centers[i % static_cast<size_t>(k)];
        for (double& x : p) x = std::max(1e-9, x + spread * rng.normal());
        double s = 0.0;
        for (double x : p) s += x;
        for (double& x : p) x /= s;
        std::snprintf(buf, sizeof buf, "z%06zu", i);
        m.zone_ids.emplace_back(buf);
        m.rows.push_back(p);
        m.totals.push_back(100);
    }
    return m;
}

// True when the two labelings induce the same partition, i.e. the label map
// a -> b is a consistent bijection.
bool same_partition(std::span<const int> a, std::span<const int> b, int k) {
    if (a.size() != b.size()) return false;
    std::vector<int> to_b(static_cast<size_t>(k), -1);
    std::vector<char> used(static_cast<size_t>(k), 0);
    for (size_t i = 0; i < a.size(); ++i) {
        const int la = a[i];
        const int lb = b[i];
        if (la < 0 || la >= k || lb < 0 || lb >= k) return false;
        if (to_b[static_cast<size_t>(la)] == -1) {
            if (used[static_cast<size_t>(lb)]) return false;
            to_b[static_cast<size_t>(la)] = lb;
            used[static_cast<size_t>(lb)] = 1;
        } else if (to_b[static_cast<size_t>(la)] != lb) {
            return false;
        }
    }
    return true;
}

void print_row(const char* name, size_t n, double serial_ms, double kernel_ms, double diff,
               bool ok) {
    std::printf("%-22s %9zu %12.2f %12.2f %9.2fx %11.2e   %s\n", name, n, serial_ms, kernel_ms,
                serial_ms / kernel_ms, diff, ok ? "ok" : "MISMATCH");
}

bool bench_silhouette(size_t n, int reps, uint64_t seed) {
    const SignatureMatrix m = mixture(n, 8, 0.02, seed);
    std::vector<int> labels(n);
    for (size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 8);

    silhouette_score(m, labels); // warm-up, spins up the thread pool

    double par = 0.0;
    const double kernel_ms = best_ms(reps, [&] { par = silhouette_score(m, labels); });
    double ser = 0.0;
    const double serial_ms = best_ms(reps, [&] { ser = serial::silhouette(m.rows, labels); });

    const double diff = std::fabs(par - ser);
    const bool ok = diff <= 1e-9;
    print_row("silhouette", n, serial_ms, kernel_ms, diff, ok);
    return ok;
}

// One serial k-means restart built from the reference kernels: a random
// first pick, farthest-point completion, Lloyd iteration to assignment
// stability, silhouette and inertia from the references. Farthest-point
// starts cover every well-separated cluster, so each restart lands on the
// planted partition.
struct SerialRun {
    std::vector<int> assignments;
    double inertia = std::numeric_limits<double>::infinity();
    double silhouette = -std::numeric_limits<double>::infinity();
    bool valid = false;
};

SerialRun serial_kmeans_once(std::span<const Vec8> points, int k, uint64_t seed) {
    Rng rng(seed);
    const auto sq8 = [](const Vec8& a, const Vec8& b) {
        double s = 0.0;
        for (size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
        return s;
    };
    std::vector<Vec8> centroids;
    centroids.push_back(points[rng.below(points.size())]);
    std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
    while (centroids.size() < static_cast<size_t>(k)) {
        size_t far_i = 0;
        for (size_t i = 0; i < points.size(); ++i) {
            nearest[i] = std::min(nearest[i], sq8(points[i], centroids.back()));
            if (nearest[i] > nearest[far_i]) far_i = i;
        }
        centroids.push_back(points[far_i]);
    }

    SerialRun run;
    for (int iter = 0; iter < 300; ++iter) {
        std::vector<int> next = serial::assign_points(points, centroids);
        const bool stable = next == run.assignments;
        run.assignments = std::move(next);
        centroids = serial::centroid_means(points, run.assignments, centroids);
        if (stable) break;
    }

    std::vector<size_t> counts(static_cast<size_t>(k), 0);
    for (int a : run.assignments) ++counts[static_cast<size_t>(a)];
    if (std::find(counts.begin(), counts.end(), size_t{0}) != counts.end()) return run;

    run.inertia = serial::inertia(points, run.assignments, centroids);
    run.silhouette = serial::silhouette(points, run.assignments);
    run.valid = true;
    return run;
}

SerialRun serial_kmeans_best_of(std::span<const Vec8> points, int k, int restarts,
                                uint64_t seed) {
    SerialRun best;
    for (int r = 0; r < restarts; ++r) {
        SerialRun run = serial_kmeans_once(points, k, mix_seed(seed, static_cast<uint64_t>(r)));
        if (!run.valid) continue;
        const bool better = !best.valid || run.silhouette > best.silhouette ||
                            (run.silhouette == best.silhouette && run.inertia < best.inertia);
        if (better) best = std::move(run);
    }
    return best;
}

// Same contract on both sides: best of `restarts` Lloyd runs on identical
// data, scored by silhouette. The production side parallelizes the restarts
// and the per-run kernels; the serial side is composed from the references.
// On this well-separated mixture both must land on the planted partition.
bool bench_kmeans(size_t n, int k, int restarts, int reps, uint64_t seed) {
    const SignatureMatrix m = mixture(n, k, 0.015, seed);

    KMeansParams params;
    params.k = k;
    params.restarts = restarts;
    params.seed = seed;

    ClusteringModel model;
    const double kernel_ms = best_ms(reps, [&] { model = kmeans_best_of(m, params); });
    SerialRun ref;
    const double serial_ms =
        best_ms(reps, [&] { ref = serial_kmeans_best_of(m.rows, k, restarts, seed); });

    const double sil_diff = std::fabs(model.silhouette - ref.silhouette);
    const double inertia_diff =
        std::fabs(model.inertia - ref.inertia) / std::max(1.0, std::fabs(ref.inertia));
    const bool ok = ref.valid && sil_diff <= 1e-9 && inertia_diff <= 1e-9 &&
                    same_partition(model.assignments, ref.assignments, k);
    print_row("kmeans best-of", n, serial_ms, kernel_ms, std::max(sil_diff, inertia_diff), ok);
    return ok;
}

Dataset make_regression(size_t rows, uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    char buf[32];
    for (size_t i = 0; i < rows; ++i) {
        Vec8 f;
        double s = 0.0;
        for (double& x : f) {
            x = 0.05 + rng.uniform01();
            s += x;
        }
        for (double& x : f) x /= s;
        const double y = 250.0 + 80.0 * f[0] - 40.0 * f[3] + 25.0 * f[5] + 12.0 * rng.normal();
        std::snprintf(buf, sizeof buf, "r%06zu", i);
        d.features.push_back(f);
        d.targets.push_back(std::max(0.0, y));
        d.row_ids.emplace_back(buf);
    }
    return d;
}

// Production pivoted QR against the textbook normal equations. Both sides
// are single threaded; the row is here for the agreement check and the
// relative cost of the two solvers.
bool bench_ols(size_t rows, int reps, uint64_t seed) {
    const Dataset data = make_regression(rows, seed);
    std::vector<int> active(kWorkTypeCount - 1);
    std::iota(active.begin(), active.end(), 0);

    OlsModel model;
    const double kernel_ms = best_ms(reps, [&] { model = fit_ols(data); });
    std::pair<double, std::vector<double>> ref;
    const double serial_ms = best_ms(
        reps, [&] { ref = serial::ols_normal_equations(data.features, data.targets, active); });

    double diff = std::fabs(model.intercept - ref.first);
    for (size_t j = 0; j < active.size(); ++j)
        diff = std::max(diff,
                        std::fabs(model.coefficients[static_cast<size_t>(active[j])] - ref.second[j]));
    diff = std::max(diff, std::fabs(model.coefficients[kWorkTypeCount - 1]));

    const bool ok = diff <= 1e-6;
    print_row("ols fit", rows, serial_ms, kernel_ms, diff, ok);
    return ok;
}

// Fixed-shape pairwise summation against left-to-right accumulation, both
// judged against a long double accumulator. Values span several orders of
// magnitude so accumulation order matters.
bool bench_sum(size_t n, int reps, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> values(n);
    const double magnitudes[5] = {1e-3, 1e4, 1.0, 1e2, 1e-1};
    for (size_t i = 0; i < n; ++i) values[i] = rng.uniform01() * magnitudes[i % 5];

    long double truth = 0.0L;
    for (double v : values) truth += static_cast<long double>(v);

    double pw = 0.0;
    const double kernel_ms = best_ms(reps, [&] { pw = pairwise_sum(values); });
    double naive = 0.0;
    const double serial_ms = best_ms(reps, [&] { naive = serial::naive_sum(values); });

    const double pw_err = std::fabs(static_cast<double>(static_cast<long double>(pw) - truth)) /
                          static_cast<double>(truth);
    const double naive_err =
        std::fabs(static_cast<double>(static_cast<long double>(naive) - truth)) /
        static_cast<double>(truth);

    const bool ok = pw_err <= 1e-12;
    print_row("pairwise sum", n, serial_ms, kernel_ms, pw_err, ok);
    std::printf("%-22s %9s %12s %12s %10s %11.2e   (left-to-right, shown for contrast)\n", "", "",
                "", "", "", naive_err);
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"citysig kernel benchmarks: production kernels vs serial references"};

    size_t sil_points = 6000;
    size_t km_points = 3000;
    int km_k = 6;
    int km_restarts = 6;
    size_t ols_rows = 200000;
    size_t sum_values = 8000000;
    int reps = 2;
    uint64_t seed = 1;

    app.add_option("--silhouette-points", sil_points, "rows for the silhouette row");
    app.add_option("--kmeans-points", km_points, "rows for the k-means row");
    app.add_option("--k", km_k, "clusters for the k-means row");
    app.add_option("--restarts", km_restarts, "restarts for the k-means row");
    app.add_option("--ols-rows", ols_rows, "rows for the least-squares row");
    app.add_option("--sum-values", sum_values, "values for the summation row");
    app.add_option("--reps", reps, "timed repetitions per side; best is kept");
    app.add_option("--seed", seed, "base seed for input generation");
    CLI11_PARSE(app, argc, argv);

    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-22s %9s %12s %12s %10s %11s   %s\n", "kernel", "n", "serial ms", "kernel ms",
                "speedup", "max diff", "check");

    int failures = 0;
    if (!bench_silhouette(sil_points, reps, seed)) ++failures;
    if (!bench_kmeans(km_points, km_k, km_restarts, reps, seed)) ++failures;
    if (!bench_ols(ols_rows, reps, seed)) ++failures;
    if (!bench_sum(sum_values, reps, seed)) ++failures;

    if (failures > 0) {
        std::printf("bench: %d agreement check(s) failed\n", failures);
        return 1;
    }
    std::printf("bench: all agreement checks passed\n");
    return 0;
}
