#include "citysig/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace citysig::serial {

namespace {

double euclid(const Vec8& a, const Vec8& b) {
    double s = 0.0;
    for (size_t d = 0; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return std::sqrt(s);
}

} // namespace

double silhouette(std::span<const Vec8> points, std::span<const int> assignments) {
    const size_t n = points.size();
    int k = 0;
    for (int a : assignments) k = std::max(k, a + 1);
    std::vector<size_t> cluster_size(static_cast<size_t>(k), 0);
    for (int a : assignments) ++cluster_size[static_cast<size_t>(a)];

    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const int own = assignments[i];
        if (cluster_size[static_cast<size_t>(own)] == 1) continue; // s(i) = 0
        std::vector<double> dist_sum(static_cast<size_t>(k), 0.0);
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            dist_sum[static_cast<size_t>(assignments[j])] += euclid(points[i], points[j]);
        }
        const double c = dist_sum[static_cast<size_t>(own)] /
                         static_cast<double>(cluster_size[static_cast<size_t>(own)] - 1);
        double o = std::numeric_limits<double>::infinity();
        for (int g = 0; g < k; ++g) {
            if (g == own || cluster_size[static_cast<size_t>(g)] == 0) continue;
            o = std::min(o, dist_sum[static_cast<size_t>(g)] /
                                static_cast<double>(cluster_size[static_cast<size_t>(g)]));
        }
        const double denom = std::max(c, o);
        if (denom > 0.0) total += (o - c) / denom;
    }
    return total / static_cast<double>(n);
}

std::vector<int> assign_points(std::span<const Vec8> points, std::span<const Vec8> centroids) {
    std::vector<int> out(points.size(), 0);
    for (size_t i = 0; i < points.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_c = 0;
        for (size_t c = 0; c < centroids.size(); ++c) {
            double d2 = 0.0;
            for (size_t d = 0; d < points[i].size(); ++d) {
                const double diff = points[i][d] - centroids[c][d];
                d2 += diff * diff;
            }
            if (d2 < best) {
                best = d2;
                best_c = static_cast<int>(c);
            }
        }
        out[i] = best_c;
    }
    return out;
}

std::vector<Vec8> centroid_means(std::span<const Vec8> points, std::span<const int> assignments,
                                 std::span<const Vec8> previous) {
    std::vector<Vec8> sums(previous.size(), Vec8{});
    std::vector<size_t> counts(previous.size(), 0);
    for (size_t i = 0; i < points.size(); ++i) {
        auto& s = sums[static_cast<size_t>(assignments[i])];
        for (size_t d = 0; d < s.size(); ++d) s[d] += points[i][d];
        ++counts[static_cast<size_t>(assignments[i])];
    }
    std::vector<Vec8> out(previous.begin(), previous.end());
    for (size_t c = 0; c < out.size(); ++c) {
        if (counts[c] == 0) continue;
        for (size_t d = 0; d < out[c].size(); ++d)
            out[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
    return out;
}

double inertia(std::span<const Vec8> points, std::span<const int> assignments,
               std::span<const Vec8> centroids) {
    double total = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
        const Vec8& c = centroids[static_cast<size_t>(assignments[i])];
        for (size_t d = 0; d < c.size(); ++d) {
            const double diff = points[i][d] - c[d];
            total += diff * diff;
        }
    }
    return total;
}

std::pair<double, std::vector<double>> ols_normal_equations(std::span<const Vec8> features,
                                                            std::span<const double> targets,
                                                            std::span<const int> active) {
    const size_t n = features.size();
    const size_t p = active.size() + 1; // intercept first
    auto design = [&](size_t row, size_t col) -> double {
        if (col == 0) return 1.0;
        return features[row][static_cast<size_t>(active[col - 1])];
    };

    // A = X^T X, b = X^T y
    std::vector<double> a(p * p, 0.0), b(p, 0.0);
    for (size_t r = 0; r < n; ++r) {
        for (size_t i = 0; i < p; ++i) {
            for (size_t j = 0; j < p; ++j) a[i * p + j] += design(r, i) * design(r, j);
            b[i] += design(r, i) * targets[r];
        }
    }

    // Gaussian elimination with partial pivoting.
    for (size_t col = 0; col < p; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < p; ++r)
            if (std::abs(a[r * p + col]) > std::abs(a[pivot * p + col])) pivot = r;
        if (std::abs(a[pivot * p + col]) < 1e-12)
            throw std::runtime_error("reference ols: singular normal equations");
        if (pivot != col) {
            for (size_t j = 0; j < p; ++j) std::swap(a[col * p + j], a[pivot * p + j]);
            std::swap(b[col], b[pivot]);
        }
        for (size_t r = 0; r < p; ++r) {
            if (r == col) continue;
            const double f = a[r * p + col] / a[col * p + col];
            for (size_t j = 0; j < p; ++j) a[r * p + j] -= f * a[col * p + j];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> solution(p);
    for (size_t i = 0; i < p; ++i) solution[i] = b[i] / a[i * p + i];

    return {solution[0], std::vector<double>(solution.begin() + 1, solution.end())};
}

double naive_sum(std::span<const double> values) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

std::map<std::string, std::pair<double, uint64_t>> mean_by_zone(std::span<const IncidentRecord> incidents) {
    std::map<std::string, std::pair<double, uint64_t>> acc;
    for (const auto& inc : incidents) {
        auto& [sum, count] = acc[inc.zone_id];
        sum += inc.response_time_s;
        ++count;
    }
    for (auto& [zone, sc] : acc) sc.first /= static_cast<double>(sc.second);
    return acc;
}

} // namespace citysig::serial
