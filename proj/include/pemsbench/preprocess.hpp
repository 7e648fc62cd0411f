#pragma once

#include "pemsbench/table.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pemsbench {

// Filter pipeline over a raw table: sparse-feature removal, liquid-fuel row
// removal, negative-emission row removal, then removal of every row that
// still has a missing cell. Step order is fixed; each step only deletes rows
// or columns, never alters a value.
struct PreprocessConfig {
    // Max allowed missing cells per non-protected feature. When
    // sparse_auto is set the threshold is computed from the data instead:
    // max(missing_count over target columns) + 1.
    std::int64_t sparse_feature_threshold = 18100;
    bool sparse_auto = false;

    std::vector<std::string> target_columns = {"NOx", "CO"};

    // Rows whose flag cell is present and equals drop_value are removed.
    // Unset column means the step is a recorded no-op.
    std::optional<std::string> liquid_fuel_flag_column;
    double liquid_fuel_drop_value = 1.0;

    // Never dropped by the sparse-feature step. Targets are implicitly
    // protected; validate() enforces the containment.
    std::vector<std::string> protected_columns;

    void validate() const;

    // Named threshold presets from the two benchmark profiles.
    static std::int64_t profile_threshold(const std::string& profile);
};

struct PipelineStep {
    std::string name;
    std::int64_t rows_before = 0;
    std::int64_t rows_after = 0;
    int cols_before = 0;
    int cols_after = 0;
};

struct PipelineReport {
    std::vector<PipelineStep> steps;

    std::string to_text() const;
    std::string to_csv() const; // step,rows_before,rows_after,cols_before,cols_after
};

// The four step labels, in pipeline order.
extern const char* const kStepLowDataFeatures;
extern const char* const kStepLiquidFuel;
extern const char* const kStepNegativeEmissions;
extern const char* const kStepMissingValues;

Table drop_sparse_features(const Table& table, std::int64_t threshold,
                           const std::vector<std::string>& protected_columns);

// Removes rows with a present, negative value in any target column. Rows
// whose target cells are masked pass through (the missing-value step owns
// those).
Table drop_negative_targets(const Table& table,
                            const std::vector<std::string>& targets);

Table drop_liquid_fuel(const Table& table, const std::string& flag_column,
                       double drop_value);

Table drop_rows_with_missing(const Table& table);

std::pair<Table, PipelineReport> run_pipeline(const Table& table,
                                              const PreprocessConfig& config);

// First three steps only (sparse features, liquid fuel, negative targets);
// the result may still contain missing cells. The ablation sweep re-runs
// the missing-row drop per feature subset on this table.
std::pair<Table, PipelineReport> run_pipeline_pre_missing(
    const Table& table, const PreprocessConfig& config);

// The effective sparse threshold for this table (resolves sparse_auto).
std::int64_t resolve_sparse_threshold(const Table& table,
                                      const PreprocessConfig& config);

} // namespace pemsbench
