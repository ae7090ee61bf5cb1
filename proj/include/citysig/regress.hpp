#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "citysig/signature.hpp"

#include "json.hpp"

namespace citysig {

struct Dataset {
    std::vector<Vec8> features;
    std::vector<double> targets; // seconds, non-negative
    std::vector<std::string> row_ids;

    size_t size() const { return targets.size(); }
};

// The 8 proportions sum to 1, so intercept + all 8 columns is exactly
// rank-deficient; by default the last feature (signage) is dropped and its
// coefficient reported as 0. Identically-zero columns are likewise excluded.
struct OlsOptions {
    std::optional<int> drop_feature = kWorkTypeCount - 1;
};

struct OlsModel {
    Vec8 coefficients{}; // excluded features carry 0
    double intercept = 0.0;
};

struct TreeParams {
    int max_depth = -1; // -1 = unlimited
    int min_samples_leaf = 1;
    int min_samples_split = 2;
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0; // leaf prediction: mean target of routed rows
    int n_samples = 0;

    bool is_leaf() const { return feature < 0; }
};

struct TreeModel {
    std::vector<TreeNode> nodes; // nodes[0] is the root
    TreeParams params;
};

struct ForestParams {
    int n_trees = 100;
    int max_features = 3; // candidate features per split
    bool bootstrap = true;
    TreeParams tree;
};

struct ForestModel {
    std::vector<TreeModel> trees;
    ForestParams params;
    uint64_t seed = 0;
};

enum class ModelKind { ols, tree, forest };
const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(std::string_view name);

using AnyModel = std::variant<OlsModel, TreeModel, ForestModel>;
ModelKind kind_of(const AnyModel& m);

OlsModel fit_ols(const Dataset& data, const OlsOptions& options = {});
TreeModel fit_tree(const Dataset& data, const TreeParams& params = {});
ForestModel fit_forest(const Dataset& data, const ForestParams& params, uint64_t seed);

double predict(const OlsModel& m, const Vec8& features);
double predict(const TreeModel& m, const Vec8& features);
double predict(const ForestModel& m, const Vec8& features);
double predict(const AnyModel& m, const Vec8& features);

// 1 - SS_res/SS_tot. Throws "zero_variance_target" when y_true is constant.
double r_squared(std::span<const double> y_true, std::span<const double> y_pred);

// One grid point per entry; all entries must hold the same alternative.
using HyperParams = std::variant<OlsOptions, TreeParams, ForestParams>;

std::vector<HyperParams> default_grid(ModelKind kind);

struct CvResult {
    size_t best_index = 0; // into the grid
    double score = 0.0;    // pooled held-out R-squared at the best grid point
    AnyModel model;        // refit on all rows with the best parameters
};

// Seeded shuffle, contiguous folds, pooled held-out predictions scored with
// one R-squared over all rows. Ties go to the earlier grid entry.
CvResult cross_validate(const Dataset& data, std::span<const HyperParams> grid, int folds,
                        uint64_t seed);

nlohmann::json to_json(const OlsModel& m);
nlohmann::json to_json(const TreeModel& m);
nlohmann::json to_json(const ForestModel& m);
nlohmann::json to_json(const AnyModel& m); // tagged with "kind"
AnyModel any_model_from_json(const nlohmann::json& j);

std::string describe_params(const HyperParams& p); // for eval_report.csv

} // namespace citysig
