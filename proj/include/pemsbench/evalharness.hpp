#pragma once

#include "pemsbench/gbdt.hpp"
#include "pemsbench/saint.hpp"
#include "pemsbench/table.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pemsbench {

// Mean absolute error / root mean squared error over paired vectors.
// Throw DataError on empty or mismatched inputs. rmse >= mae always.
double mae(std::span<const double> y, std::span<const double> y_hat);
double rmse(std::span<const double> y, std::span<const double> y_hat);

// Repeated random subsampling: n_repeats independent train/test partitions
// with seeds base_seed + repeat_index.
struct CvPlan {
    int n_repeats = 10;
    double test_fraction = 0.2;
    std::uint64_t base_seed = 0;

    void validate() const;
};

// Disjoint, exhaustive partition; test gets round(test_fraction * n_rows)
// rows. Deterministic per seed; row order is preserved within each side.
std::pair<Table, Table> subsample_split(const Table& table,
                                        std::uint64_t seed,
                                        double test_fraction);

// A regression model under benchmark. fit() may ignore the training table
// for training-free baselines; the returned predictor maps any table with
// the expected columns to one prediction per row.
using Predictor = std::function<std::vector<double>(const Table&)>;
struct ModelSpec {
    std::string name;
    bool trainable = true;
    // (train, target, excluded_columns, seed) -> predictor
    std::function<Predictor(const Table&, const std::string&,
                            const std::vector<std::string>&, std::uint64_t)>
        fit;
};

ModelSpec gbdt_spec(const GbdtParams& params);
ModelSpec saint_spec(const SaintConfig& config);
// First-principles-style stub computed from the driver columns.
ModelSpec baseline_parametric_spec();
// Adapter that reads precomputed predictions from column `prefix + target`.
ModelSpec baseline_column_spec(const std::string& prefix);

struct ReportRow {
    std::string model;
    std::string target;
    int n_features = 0;
    std::int64_t n_rows = 0; // rows available in the evaluated table
    std::string metric;      // "MAE" or "RMSE"
    std::vector<double> repeats;
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation (n-1); 0 for n=1
};

struct EvalReport {
    std::vector<ReportRow> rows;
};

// Runs the full repeated-subsample protocol for one target. Trainable
// models are re-fit on every train split; the baseline is evaluated on the
// identical test split. `excluded` columns are never model inputs (the
// other target and any adapter/prediction columns belong here).
// n_features_key labels the report rows; pass -1 to use the feature count.
// threads = 0 picks min(hardware, n_repeats); repeats are independent, so
// the result is identical for any thread count.
EvalReport cross_validate(const Table& table, const std::string& target,
                          const std::vector<ModelSpec>& models,
                          const CvPlan& plan,
                          const std::vector<std::string>& excluded = {},
                          int n_features_key = -1, int threads = 0);

// Everything cmd_bench needs, shared with the acceptance suite.
struct BenchConfig {
    std::vector<std::string> targets = {"NOx", "CO"};
    std::vector<std::string> models = {"gbdt", "saint", "baseline"};
    GbdtParams gbdt;
    SaintConfig saint;
    CvPlan plan;
    std::string baseline_mode = "parametric"; // parametric | column
    std::string baseline_column_prefix = "ck_pred_";
    // Columns that exist in the table but are never model inputs.
    std::vector<std::string> excluded_features;
    int threads = 0;

    void validate() const;
};

// Cross-validates every (model, target) pair on an already-cleaned table.
EvalReport run_benchmark(const Table& cleaned, const BenchConfig& config);

// Importance-ordered feature ablation. `base` is the table after the
// column/liquid-fuel/negative steps but before the missing-row drop: for
// each k (descending), the k most important features (ranked by a reference
// GBDT per target on the fully cleaned table) are kept, the missing-row
// drop is re-run on the restricted table (fewer features keep more rows),
// and the usual cross-validation runs on the result. With the parametric
// baseline the driver columns are retained in the table (excluded from
// model inputs unless inside the top k) so the baseline stays computable.
EvalReport ablation_sweep(const Table& base, const BenchConfig& config,
                          const std::vector<int>& feature_counts);

enum class ReportFormat { csv, json };

std::string report_to_csv(const EvalReport& report);
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
void report_emit(const EvalReport& report, const std::string& path,
                 ReportFormat format);

} // namespace pemsbench
