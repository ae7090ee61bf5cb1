#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "citysig/records.hpp"
#include "citysig/signature.hpp"

// Serial reference implementations of the numeric kernels, written straight
// from the defining formulas and sharing no code with the parallel versions.
// Tests use them as oracles; the bench target compares them for speed.
namespace citysig::serial {

// Mean silhouette width, plain O(n^2) double loop.
double silhouette(std::span<const Vec8> points, std::span<const int> assignments);

// Nearest-centroid assignment, ties to the lowest centroid index.
std::vector<int> assign_points(std::span<const Vec8> points, std::span<const Vec8> centroids);

// Per-cluster arithmetic means. Empty clusters keep their previous centroid.
std::vector<Vec8> centroid_means(std::span<const Vec8> points, std::span<const int> assignments,
                                 std::span<const Vec8> previous);

// Sum of squared distances from each point to its assigned centroid.
double inertia(std::span<const Vec8> points, std::span<const int> assignments,
               std::span<const Vec8> centroids);

// Least squares through the normal equations (X^T X) b = X^T y with Gaussian
// elimination. active lists the feature columns included next to the
// intercept. Returns {intercept, coefficients aligned with active}.
std::pair<double, std::vector<double>> ols_normal_equations(std::span<const Vec8> features,
                                                            std::span<const double> targets,
                                                            std::span<const int> active);

// Plain left-to-right accumulation.
double naive_sum(std::span<const double> values);

// Per-zone {mean, count} by straightforward accumulation.
std::map<std::string, std::pair<double, uint64_t>> mean_by_zone(std::span<const IncidentRecord> incidents);

} // namespace citysig::serial
