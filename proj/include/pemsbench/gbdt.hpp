#pragma once

#include "pemsbench/table.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pemsbench {

// Gradient-boosted regression trees with second-order split gain, leaf L2
// regularization, a gamma split penalty, shrinkage, and learned default
// directions for missing values. Squared-error objective, exact greedy
// split enumeration (no histograms): desk-scale data keeps that affordable
// and lets a brute-force oracle verify every split.
struct GbdtParams {
    int n_rounds = 200;
    double learning_rate = 0.1; // eta, applied at prediction time
    int max_depth = 6;
    double lambda = 1.0; // leaf L2
    double gamma = 0.0;  // per-split gain penalty
    double min_child_weight = 1.0;
    // Unset means: use the training target mean.
    std::optional<double> base_score;

    void validate() const;
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    bool default_left = true; // side taken when the split feature is masked
    double weight = 0.0;      // leaf value (unscaled; eta applied on predict)
    int left = -1;
    int right = -1;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes; // nodes[0] is the root when non-empty

    // Routes one row to a leaf weight. `values`/`missing` are indexed by the
    // model's feature order.
    double route(const double* values, const std::uint8_t* missing) const;
};

struct GbdtModel {
    GbdtParams params;
    double base_score = 0.0; // resolved value actually used
    std::vector<std::string> feature_names;
    std::vector<Tree> trees;

    // base_score + eta * sum of tree outputs.
    double predict_row(const double* values, const std::uint8_t* missing) const;
};

struct SplitDecision {
    int feature = -1;
    double threshold = 0.0;
    bool default_left = true;
    double gain = 0.0;
};

// Best split on a single feature: thresholds are midpoints between
// consecutive distinct present values; missing rows are routed to whichever
// side yields the larger gain (ties prefer left). Returns the best
// candidate with gain > 0, or nullopt. `gain` already includes the -gamma
// penalty. g/h/values/mask must have equal lengths.
std::optional<SplitDecision> best_split_feature(
    std::span<const double> grads, std::span<const double> hessians,
    std::span<const double> values, std::span<const std::uint8_t> missing,
    const GbdtParams& params, int feature_index);

// Best split across features; ties broken by lowest feature index, then
// lowest threshold, then default-left. Columns are parallel spans over the
// same rows.
std::optional<SplitDecision> best_split(
    std::span<const double> grads, std::span<const double> hessians,
    const std::vector<std::span<const double>>& feature_values,
    const std::vector<std::span<const std::uint8_t>>& feature_missing,
    const GbdtParams& params);

// Fired once per accepted split with the node's rows (original table row
// ids) and the gradient arrays; lets tests replay every decision against an
// independent oracle.
struct SplitObservation {
    const std::vector<std::int64_t>& rows;
    const std::vector<double>& grads;    // full-length, indexed by row id
    const std::vector<double>& hessians; // full-length, indexed by row id
    SplitDecision chosen;
};
using SplitObserver = std::function<void(const SplitObservation&)>;

struct GbdtTrainLog {
    std::vector<double> round_mse; // training MSE after each round
};

// Trains on `table` using every column except `target` (and except
// `excluded`) as features. The target column must be fully present.
GbdtModel train_gbdt(const Table& table, const std::string& target,
                     const GbdtParams& params,
                     const std::vector<std::string>& excluded = {},
                     GbdtTrainLog* log = nullptr,
                     const SplitObserver& observer = nullptr);

std::vector<double> predict_gbdt(const GbdtModel& model, const Table& table);

// Split-usage count per feature, all features included, sorted by count
// descending then model feature order.
std::vector<std::pair<std::string, std::int64_t>> feature_importance(
    const GbdtModel& model);

// Bottom-up collapse of internal nodes whose recorded gain is <= 0; the
// node becomes a leaf with weight -G/(H+lambda). Trees produced by
// train_gbdt never contain such nodes (growth already requires gain > 0),
// so this is a no-op on them, but the pass is part of the pruning contract
// and is exercised directly by tests. Arrays are indexed by node id.
void prune_tree(Tree& tree, const std::vector<double>& gains,
                const std::vector<double>& node_g,
                const std::vector<double>& node_h, double lambda);

std::string gbdt_to_json(const GbdtModel& model);
GbdtModel gbdt_from_json(const std::string& text);

} // namespace pemsbench
