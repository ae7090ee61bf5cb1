#include "citysig/regress.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "citysig/error.hpp"
#include "citysig/rng.hpp"

namespace citysig {

const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::ols: return "ols";
        case ModelKind::tree: return "tree";
        case ModelKind::forest: return "forest";
    }
    throw_internal("internal_error", "unknown model kind");
}

ModelKind model_kind_from_name(std::string_view name) {
    if (name == "ols") return ModelKind::ols;
    if (name == "tree") return ModelKind::tree;
    if (name == "forest") return ModelKind::forest;
    throw_config("bad_config", "unknown model kind: " + std::string(name));
}

ModelKind kind_of(const AnyModel& m) {
    return std::visit(
        [](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, OlsModel>) return ModelKind::ols;
            else if constexpr (std::is_same_v<T, TreeModel>) return ModelKind::tree;
            else return ModelKind::forest;
        },
        m);
}

// ---------------------------------------------------------------------------
// OLS via column-pivoted Householder QR on the design [1 | active features].

OlsModel fit_ols(const Dataset& data, const OlsOptions& options) {
    const size_t n = data.size();
    if (n == 0) throw_data("empty_dataset", "ols needs at least one row");
    if (n < 2) throw_data("too_few_rows", "ols needs at least 2 rows");
    if (options.drop_feature && (*options.drop_feature < 0 || *options.drop_feature >= static_cast<int>(kWorkTypeCount)))
        throw_config("bad_config", "drop_feature out of range");

    // Active columns: everything except the dropped feature and columns that
    // are identically zero (their coefficient is pinned at 0).
    std::vector<int> active;
    for (int f = 0; f < static_cast<int>(kWorkTypeCount); ++f) {
        if (options.drop_feature && *options.drop_feature == f) continue;
        bool all_zero = true;
        for (size_t r = 0; r < n && all_zero; ++r) all_zero = data.features[r][static_cast<size_t>(f)] == 0.0;
        if (!all_zero) active.push_back(f);
    }

    const size_t p = active.size() + 1;
    // Column-major design matrix.
    std::vector<std::vector<double>> col(p, std::vector<double>(n));
    for (size_t r = 0; r < n; ++r) col[0][r] = 1.0;
    for (size_t j = 1; j < p; ++j)
        for (size_t r = 0; r < n; ++r) col[j][r] = data.features[r][static_cast<size_t>(active[j - 1])];

    std::vector<double> rhs(data.targets.begin(), data.targets.end());
    std::vector<size_t> perm(p);
    std::iota(perm.begin(), perm.end(), size_t{0});
    std::vector<double> rdiag(p, 0.0);

    const size_t steps = std::min(n, p);
    for (size_t step = 0; step < steps; ++step) {
        // Pivot: bring the column with the largest remaining norm forward.
        size_t pivot = step;
        double best_norm = -1.0;
        for (size_t j = step; j < p; ++j) {
            double s = 0.0;
            for (size_t r = step; r < n; ++r) s += col[j][r] * col[j][r];
            if (s > best_norm) {
                best_norm = s;
                pivot = j;
            }
        }
        if (pivot != step) {
            std::swap(col[step], col[pivot]);
            std::swap(perm[step], perm[pivot]);
        }

        // Householder vector for column `step`.
        double norm = std::sqrt(best_norm);
        if (norm == 0.0) {
            rdiag[step] = 0.0;
            continue;
        }
        if (col[step][step] > 0.0) norm = -norm;
        std::vector<double> v(n - step);
        for (size_t r = step; r < n; ++r) v[r - step] = col[step][r];
        v[0] -= norm;
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        rdiag[step] = norm;
        col[step][step] = norm;
        for (size_t r = step + 1; r < n; ++r) col[step][r] = 0.0;
        if (vnorm2 == 0.0) continue;

        auto reflect = [&](std::vector<double>& target) {
            double dot = 0.0;
            for (size_t r = step; r < n; ++r) dot += v[r - step] * target[r];
            const double f = 2.0 * dot / vnorm2;
            for (size_t r = step; r < n; ++r) target[r] -= f * v[r - step];
        };
        for (size_t j = step + 1; j < p; ++j) reflect(col[j]);
        reflect(rhs);
    }

    // Rank check on the R diagonal.
    const double tol = std::abs(rdiag[0]) * static_cast<double>(std::max(n, p)) *
                       std::numeric_limits<double>::epsilon();
    size_t rank = 0;
    while (rank < steps && std::abs(rdiag[rank]) > tol) ++rank;
    if (rank < p) {
        std::string deficient;
        for (size_t j = rank; j < p; ++j) {
            if (!deficient.empty()) deficient += ", ";
            deficient += perm[j] == 0 ? "intercept"
                                      : std::string(kWorkTypeNames[static_cast<size_t>(active[perm[j] - 1])]);
        }
        throw_data("singular_design", "design matrix is rank-deficient in columns: " + deficient);
    }

    // Back-substitute R x = Q^T y (upper triangle lives in col[j][r], r <= j).
    std::vector<double> x(p, 0.0);
    for (size_t j = p; j-- > 0;) {
        double s = rhs[j];
        for (size_t m2 = j + 1; m2 < p; ++m2) s -= col[m2][j] * x[m2];
        x[j] = s / col[j][j];
    }

    OlsModel model;
    for (size_t j = 0; j < p; ++j) {
        if (perm[j] == 0) model.intercept = x[j];
        else model.coefficients[static_cast<size_t>(active[perm[j] - 1])] = x[j];
    }
    for (double c : model.coefficients)
        if (!std::isfinite(c)) throw_data("singular_design", "non-finite coefficient");
    if (!std::isfinite(model.intercept)) throw_data("singular_design", "non-finite intercept");
    return model;
}

// ---------------------------------------------------------------------------
// CART regression tree, variance-reduction splits.

namespace {

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double cost = std::numeric_limits<double>::infinity(); // summed child SSE
};

// Best split over the given candidate features (must be sorted ascending).
// rows indexes into data; ties go to the lower feature, then lower threshold.
SplitChoice best_split(const Dataset& data, const std::vector<int>& rows,
                       std::span<const int> features, int min_samples_leaf) {
    const size_t n = rows.size();
    SplitChoice best;

    std::vector<std::pair<double, int>> order(n);
    std::vector<double> ysum(n + 1), ysq(n + 1);
    for (int f : features) {
        for (size_t i = 0; i < n; ++i)
            order[i] = {data.features[static_cast<size_t>(rows[i])][static_cast<size_t>(f)], rows[i]};
        std::sort(order.begin(), order.end());

        ysum[0] = 0.0;
        ysq[0] = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double y = data.targets[static_cast<size_t>(order[i].second)];
            ysum[i + 1] = ysum[i] + y;
            ysq[i + 1] = ysq[i] + y * y;
        }

        for (size_t i = 1; i < n; ++i) {
            if (order[i].first == order[i - 1].first) continue; // not a boundary
            const size_t nl = i, nr = n - i;
            if (nl < static_cast<size_t>(min_samples_leaf) || nr < static_cast<size_t>(min_samples_leaf))
                continue;
            const double sl = ysum[i], sr = ysum[n] - sl;
            const double ql = ysq[i], qr = ysq[n] - ql;
            const double cost = (ql - sl * sl / static_cast<double>(nl)) +
                                (qr - sr * sr / static_cast<double>(nr));
            if (cost < best.cost) {
                best.cost = cost;
                best.feature = f;
                best.threshold = (order[i - 1].first + order[i].first) / 2.0;
            }
        }
    }
    return best;
}

// Depth-first builder shared by single trees and forest trees; the feature
// chooser abstracts per-split subsampling.
TreeModel build_tree(const Dataset& data, std::vector<int> rows, const TreeParams& params,
                     const std::function<std::vector<int>()>& choose_features) {
    if (rows.empty()) throw_data("empty_dataset", "tree needs at least one row");
    if (params.min_samples_leaf < 1) throw_config("bad_config", "min_samples_leaf must be at least 1");
    if (params.min_samples_split < 2) throw_config("bad_config", "min_samples_split must be at least 2");

    TreeModel model;
    model.params = params;

    struct Frame {
        std::vector<int> rows;
        int depth;
        int node;
    };

    auto emit_node = [&]() {
        model.nodes.emplace_back();
        return static_cast<int>(model.nodes.size()) - 1;
    };

    std::vector<Frame> stack;
    stack.push_back({std::move(rows), 0, emit_node()});

    while (!stack.empty()) {
        Frame frame = std::move(stack.back());
        stack.pop_back();
        const auto& r = frame.rows;
        const size_t n = r.size();

        double sum = 0.0;
        for (int i : r) sum += data.targets[static_cast<size_t>(i)];
        const double mean = sum / static_cast<double>(n);

        bool constant = true;
        for (int i : r)
            if (data.targets[static_cast<size_t>(i)] != data.targets[static_cast<size_t>(r[0])]) {
                constant = false;
                break;
            }

        TreeNode& node = model.nodes[static_cast<size_t>(frame.node)];
        node.value = mean;
        node.n_samples = static_cast<int>(n);

        const bool depth_stop = params.max_depth >= 0 && frame.depth >= params.max_depth;
        if (depth_stop || constant || n < static_cast<size_t>(params.min_samples_split) ||
            n < 2 * static_cast<size_t>(params.min_samples_leaf))
            continue; // leaf

        const SplitChoice split = best_split(data, r, choose_features(), params.min_samples_leaf);
        if (split.feature < 0) continue; // no admissible boundary: leaf

        std::vector<int> left, right;
        left.reserve(n);
        right.reserve(n);
        for (int i : r) {
            if (data.features[static_cast<size_t>(i)][static_cast<size_t>(split.feature)] < split.threshold)
                left.push_back(i);
            else
                right.push_back(i);
        }

        const int left_node = emit_node();
        const int right_node = emit_node();
        TreeNode& parent = model.nodes[static_cast<size_t>(frame.node)];
        parent.feature = split.feature;
        parent.threshold = split.threshold;
        parent.left = left_node;
        parent.right = right_node;

        // Right pushed first so the left subtree is expanded first.
        stack.push_back({std::move(right), frame.depth + 1, right_node});
        stack.push_back({std::move(left), frame.depth + 1, left_node});
    }
    return model;
}

std::vector<int> all_features() {
    std::vector<int> f(kWorkTypeCount);
    std::iota(f.begin(), f.end(), 0);
    return f;
}

} // namespace

TreeModel fit_tree(const Dataset& data, const TreeParams& params) {
    if (data.size() == 0) throw_data("empty_dataset", "tree needs at least one row");
    std::vector<int> rows(data.size());
    std::iota(rows.begin(), rows.end(), 0);
    static const std::vector<int> features = all_features();
    return build_tree(data, std::move(rows), params, [] { return features; });
}

ForestModel fit_forest(const Dataset& data, const ForestParams& params, uint64_t seed) {
    if (data.size() == 0) throw_data("empty_dataset", "forest needs at least one row");
    if (params.n_trees < 1) throw_config("bad_config", "n_trees must be at least 1");
    if (params.max_features < 1 || params.max_features > static_cast<int>(kWorkTypeCount))
        throw_config("bad_config", "max_features must be in [1, 8]");

    ForestModel forest;
    forest.params = params;
    forest.seed = seed;
    forest.trees.resize(static_cast<size_t>(params.n_trees));

    const size_t n = data.size();
    std::vector<std::exception_ptr> failures(static_cast<size_t>(params.n_trees));

#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < params.n_trees; ++t) {
        try {
            Rng rng(mix_seed(seed, static_cast<uint64_t>(t)));
            std::vector<int> rows(n);
            if (params.bootstrap) {
                for (size_t i = 0; i < n; ++i) rows[i] = static_cast<int>(rng.below(n));
            } else {
                std::iota(rows.begin(), rows.end(), 0);
            }
            // Per-split feature subsets come from the same per-tree stream;
            // node expansion order is deterministic, so so are the draws.
            auto choose = [&rng, &params]() {
                std::array<int, kWorkTypeCount> pool;
                std::iota(pool.begin(), pool.end(), 0);
                const size_t m = static_cast<size_t>(params.max_features);
                for (size_t i = 0; i < m; ++i) {
                    const size_t j = i + rng.below(pool.size() - i);
                    std::swap(pool[i], pool[j]);
                }
                std::vector<int> subset(pool.begin(), pool.begin() + static_cast<ptrdiff_t>(m));
                std::sort(subset.begin(), subset.end());
                return subset;
            };
            forest.trees[static_cast<size_t>(t)] = build_tree(data, std::move(rows), params.tree, choose);
        } catch (...) {
            failures[static_cast<size_t>(t)] = std::current_exception();
        }
    }
    for (const auto& f : failures)
        if (f) std::rethrow_exception(f);
    return forest;
}

// ---------------------------------------------------------------------------
// Prediction.

namespace {

void check_features(const Vec8& features) {
    for (double v : features)
        if (!std::isfinite(v)) throw_data("invalid_features", "non-finite feature value");
}

} // namespace

double predict(const OlsModel& m, const Vec8& features) {
    check_features(features);
    double y = m.intercept;
    for (size_t d = 0; d < features.size(); ++d) y += m.coefficients[d] * features[d];
    return y;
}

double predict(const TreeModel& m, const Vec8& features) {
    check_features(features);
    int node = 0;
    while (!m.nodes[static_cast<size_t>(node)].is_leaf()) {
        const TreeNode& nd = m.nodes[static_cast<size_t>(node)];
        node = features[static_cast<size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right;
    }
    return m.nodes[static_cast<size_t>(node)].value;
}

double predict(const ForestModel& m, const Vec8& features) {
    check_features(features);
    std::vector<double> preds(m.trees.size());
    for (size_t t = 0; t < m.trees.size(); ++t) preds[t] = predict(m.trees[t], features);
    return pairwise_sum(preds) / static_cast<double>(m.trees.size());
}

double predict(const AnyModel& m, const Vec8& features) {
    return std::visit([&](const auto& v) { return predict(v, features); }, m);
}

// ---------------------------------------------------------------------------
// Scoring and cross-validation.

double r_squared(std::span<const double> y_true, std::span<const double> y_pred) {
    if (y_true.size() != y_pred.size())
        throw_internal("internal_error", "r_squared length mismatch");
    if (y_true.size() < 2) throw_internal("internal_error", "r_squared needs at least 2 values");

    const double mean = pairwise_sum(y_true) / static_cast<double>(y_true.size());
    std::vector<double> res(y_true.size()), tot(y_true.size());
    for (size_t i = 0; i < y_true.size(); ++i) {
        const double r = y_true[i] - y_pred[i];
        const double t = y_true[i] - mean;
        res[i] = r * r;
        tot[i] = t * t;
    }
    const double ss_tot = pairwise_sum(tot);
    if (ss_tot == 0.0) throw_data("zero_variance_target", "y_true is constant");
    return 1.0 - pairwise_sum(res) / ss_tot;
}

std::vector<HyperParams> default_grid(ModelKind kind) {
    std::vector<HyperParams> grid;
    switch (kind) {
        case ModelKind::ols:
            grid.push_back(OlsOptions{});
            break;
        case ModelKind::tree:
            for (int depth : {2, 4, 8, -1})
                for (int leaf : {1, 3, 5})
                    grid.push_back(TreeParams{depth, leaf, 2});
            break;
        case ModelKind::forest:
            grid.push_back(ForestParams{});
            break;
    }
    return grid;
}

namespace {

AnyModel fit_any(const Dataset& data, const HyperParams& params, uint64_t seed) {
    return std::visit(
        [&](const auto& p) -> AnyModel {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, OlsOptions>) return fit_ols(data, p);
            else if constexpr (std::is_same_v<T, TreeParams>) return fit_tree(data, p);
            else return fit_forest(data, p, seed);
        },
        params);
}

} // namespace

CvResult cross_validate(const Dataset& data, std::span<const HyperParams> grid, int folds,
                        uint64_t seed) {
    const size_t n = data.size();
    if (grid.empty()) throw_config("bad_config", "empty parameter grid");
    if (folds < 2) throw_config("bad_config", "folds must be at least 2");
    if (n < static_cast<size_t>(folds))
        throw_data("too_few_rows", "need at least " + std::to_string(folds) + " rows, have " +
                                       std::to_string(n));

    // Seeded shuffle; fold f takes a contiguous slice of the permutation.
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), size_t{0});
    Rng shuffle_rng(mix_seed(seed, 0));
    for (size_t i = 0; i + 1 < n; ++i) {
        const size_t j = i + shuffle_rng.below(n - i);
        std::swap(perm[i], perm[j]);
    }
    std::vector<int> fold_of(n);
    {
        const size_t base = n / static_cast<size_t>(folds);
        const size_t rem = n % static_cast<size_t>(folds);
        size_t pos = 0;
        for (int f = 0; f < folds; ++f) {
            const size_t len = base + (static_cast<size_t>(f) < rem ? 1 : 0);
            for (size_t i = 0; i < len; ++i) fold_of[perm[pos + i]] = f;
            pos += len;
        }
    }

    auto fit_seed = [&](size_t g, int f) {
        // f in [0, folds) for fold fits, f = folds for the full refit.
        return mix_seed(seed, 1 + g * (static_cast<size_t>(folds) + 1) + static_cast<size_t>(f));
    };

    double best_score = -std::numeric_limits<double>::infinity();
    size_t best_index = 0;
    bool have_best = false;

    for (size_t g = 0; g < grid.size(); ++g) {
        std::vector<double> held_out(n, 0.0);
        for (int f = 0; f < folds; ++f) {
            Dataset train;
            for (size_t i = 0; i < n; ++i) {
                if (fold_of[i] == f) continue;
                train.features.push_back(data.features[i]);
                train.targets.push_back(data.targets[i]);
            }
            const AnyModel model = fit_any(train, grid[g], fit_seed(g, f));
            for (size_t i = 0; i < n; ++i)
                if (fold_of[i] == f) held_out[i] = predict(model, data.features[i]);
        }
        const double score = r_squared(data.targets, held_out);
        if (!have_best || score > best_score) {
            best_score = score;
            best_index = g;
            have_best = true;
        }
    }

    CvResult result;
    result.best_index = best_index;
    result.score = best_score;
    result.model = fit_any(data, grid[best_index], fit_seed(best_index, folds));
    return result;
}

// ---------------------------------------------------------------------------
// Serialization. Schema version guards future layout changes.

static constexpr int kModelSchemaVersion = 1;

nlohmann::json to_json(const OlsModel& m) {
    return {{"coefficients", std::vector<double>(m.coefficients.begin(), m.coefficients.end())},
            {"intercept", m.intercept}};
}

nlohmann::json to_json(const TreeModel& m) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : m.nodes) {
        if (n.is_leaf())
            nodes.push_back({{"value", n.value}, {"n_samples", n.n_samples}});
        else
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"value", n.value},
                             {"n_samples", n.n_samples}});
    }
    return {{"nodes", nodes},
            {"params",
             {{"max_depth", m.params.max_depth},
              {"min_samples_leaf", m.params.min_samples_leaf},
              {"min_samples_split", m.params.min_samples_split}}}};
}

nlohmann::json to_json(const ForestModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) trees.push_back(to_json(t));
    return {{"trees", trees},
            {"params",
             {{"n_trees", m.params.n_trees},
              {"max_features", m.params.max_features},
              {"bootstrap", m.params.bootstrap},
              {"tree",
               {{"max_depth", m.params.tree.max_depth},
                {"min_samples_leaf", m.params.tree.min_samples_leaf},
                {"min_samples_split", m.params.tree.min_samples_split}}}}},
            {"seed", m.seed}};
}

nlohmann::json to_json(const AnyModel& m) {
    nlohmann::json j = std::visit([](const auto& v) { return to_json(v); }, m);
    j["kind"] = model_kind_name(kind_of(m));
    j["schema_version"] = kModelSchemaVersion;
    return j;
}

namespace {

TreeParams tree_params_from_json(const nlohmann::json& j) {
    return TreeParams{j.at("max_depth").get<int>(), j.at("min_samples_leaf").get<int>(),
                      j.at("min_samples_split").get<int>()};
}

TreeModel tree_from_json(const nlohmann::json& j) {
    TreeModel m;
    m.params = tree_params_from_json(j.at("params"));
    for (const auto& nj : j.at("nodes")) {
        TreeNode n;
        n.value = nj.at("value").get<double>();
        n.n_samples = nj.at("n_samples").get<int>();
        if (nj.contains("feature")) {
            n.feature = nj.at("feature").get<int>();
            n.threshold = nj.at("threshold").get<double>();
            n.left = nj.at("left").get<int>();
            n.right = nj.at("right").get<int>();
        }
        m.nodes.push_back(n);
    }
    if (m.nodes.empty()) throw_data("bad_row", "tree model has no nodes");
    return m;
}

} // namespace

AnyModel any_model_from_json(const nlohmann::json& j) {
    const int version = j.value("schema_version", 1);
    if (version != kModelSchemaVersion)
        throw_data("bad_row", "unsupported model schema version " + std::to_string(version));
    const ModelKind kind = model_kind_from_name(j.at("kind").get<std::string>());
    switch (kind) {
        case ModelKind::ols: {
            OlsModel m;
            auto c = j.at("coefficients").get<std::vector<double>>();
            if (c.size() != kWorkTypeCount) throw_data("bad_row", "ols model has wrong dimension");
            std::copy(c.begin(), c.end(), m.coefficients.begin());
            m.intercept = j.at("intercept").get<double>();
            return m;
        }
        case ModelKind::tree:
            return tree_from_json(j);
        case ModelKind::forest: {
            ForestModel m;
            const auto& pj = j.at("params");
            m.params.n_trees = pj.at("n_trees").get<int>();
            m.params.max_features = pj.at("max_features").get<int>();
            m.params.bootstrap = pj.at("bootstrap").get<bool>();
            m.params.tree = tree_params_from_json(pj.at("tree"));
            m.seed = j.at("seed").get<uint64_t>();
            for (const auto& tj : j.at("trees")) m.trees.push_back(tree_from_json(tj));
            if (m.trees.empty()) throw_data("bad_row", "forest model has no trees");
            return m;
        }
    }
    throw_internal("internal_error", "unreachable");
}

std::string describe_params(const HyperParams& p) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, OlsOptions>) {
                if (v.drop_feature)
                    return "drop_feature=" + std::string(kWorkTypeNames[static_cast<size_t>(*v.drop_feature)]);
                return "drop_feature=none";
            } else if constexpr (std::is_same_v<T, TreeParams>) {
                return "max_depth=" + std::to_string(v.max_depth) +
                       ";min_samples_leaf=" + std::to_string(v.min_samples_leaf) +
                       ";min_samples_split=" + std::to_string(v.min_samples_split);
            } else {
                return "n_trees=" + std::to_string(v.n_trees) +
                       ";max_features=" + std::to_string(v.max_features) +
                       ";bootstrap=" + std::string(v.bootstrap ? "on" : "off") +
                       ";max_depth=" + std::to_string(v.tree.max_depth) +
                       ";min_samples_leaf=" + std::to_string(v.tree.min_samples_leaf);
            }
        },
        p);
}

} // namespace citysig
