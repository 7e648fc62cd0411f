#include "pemsbench/preprocess.hpp"

#include "pemsbench/errors.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace pemsbench {

const char* const kStepLowDataFeatures = "Remove low data features";
const char* const kStepLiquidFuel = "Remove liquid fuel data";
const char* const kStepNegativeEmissions = "Remove negative emissions";
const char* const kStepMissingValues = "Remove all missing values";

void PreprocessConfig::validate() const {
    if (sparse_feature_threshold < 0) {
        throw ConfigError("sparse_feature_threshold must be >= 0");
    }
    if (target_columns.empty()) {
        throw ConfigError("target_columns must not be empty");
    }
    std::unordered_set<std::string> prot(protected_columns.begin(),
                                         protected_columns.end());
    for (const auto& t : target_columns) {
        if (!prot.empty() && !prot.count(t)) {
            throw ConfigError("target column \"" + t +
                              "\" must be listed in protected_columns");
        }
    }
}

std::int64_t PreprocessConfig::profile_threshold(const std::string& profile) {
    if (profile == "full") return 18100;
    if (profile == "cropped") return 3000;
    throw ConfigError("unknown preprocess profile \"" + profile +
                      "\" (expected full or cropped)");
}

Table drop_sparse_features(const Table& table, std::int64_t threshold,
                           const std::vector<std::string>& protected_columns) {
    if (threshold < 0) throw ConfigError("sparse threshold must be >= 0");
    std::unordered_set<std::string> prot(protected_columns.begin(),
                                         protected_columns.end());
    std::vector<std::string> to_drop;
    for (const auto& name : table.column_names) {
        if (prot.count(name)) continue;
        if (column_stats(table, name).missing_count > threshold) {
            to_drop.push_back(name);
        }
    }
    return drop_columns(table, to_drop);
}

Table drop_negative_targets(const Table& table,
                            const std::vector<std::string>& targets) {
    std::vector<int> idx;
    idx.reserve(targets.size());
    for (const auto& t : targets) idx.push_back(table.col_index(t));
    std::vector<std::uint8_t> keep(static_cast<size_t>(table.n_rows()), 1);
    for (std::int64_t r = 0; r < table.n_rows(); ++r) {
        for (int c : idx) {
            if (!table.is_missing(r, c) && table.value(r, c) < 0.0) {
                keep[static_cast<size_t>(r)] = 0;
                break;
            }
        }
    }
    return filter_rows(table, keep);
}

Table drop_liquid_fuel(const Table& table, const std::string& flag_column,
                       double drop_value) {
    const int c = table.col_index(flag_column);
    std::vector<std::uint8_t> keep(static_cast<size_t>(table.n_rows()), 1);
    for (std::int64_t r = 0; r < table.n_rows(); ++r) {
        if (!table.is_missing(r, c) && table.value(r, c) == drop_value) {
            keep[static_cast<size_t>(r)] = 0;
        }
    }
    return filter_rows(table, keep);
}

Table drop_rows_with_missing(const Table& table) {
    std::vector<std::uint8_t> keep(static_cast<size_t>(table.n_rows()), 1);
    for (int c = 0; c < table.n_cols(); ++c) {
        const auto& mask = table.missing[static_cast<size_t>(c)];
        for (std::int64_t r = 0; r < table.n_rows(); ++r) {
            if (mask[static_cast<size_t>(r)]) keep[static_cast<size_t>(r)] = 0;
        }
    }
    return filter_rows(table, keep);
}

std::int64_t resolve_sparse_threshold(const Table& table,
                                      const PreprocessConfig& config) {
    if (!config.sparse_auto) return config.sparse_feature_threshold;
    std::int64_t worst = 0;
    for (const auto& t : config.target_columns) {
        worst = std::max(worst, column_stats(table, t).missing_count);
    }
    return worst + 1;
}

std::pair<Table, PipelineReport> run_pipeline(const Table& table,
                                              const PreprocessConfig& config) {
    auto [current, report] = run_pipeline_pre_missing(table, config);
    Table next = drop_rows_with_missing(current);
    report.steps.push_back({kStepMissingValues, current.n_rows(),
                            next.n_rows(), current.n_cols(), next.n_cols()});
    return {std::move(next), std::move(report)};
}

std::pair<Table, PipelineReport> run_pipeline_pre_missing(
    const Table& table, const PreprocessConfig& config) {
    config.validate();
    for (const auto& t : config.target_columns) table.col_index(t);

    std::vector<std::string> prot = config.protected_columns;
    const auto ensure_protected = [&prot](const std::string& name) {
        if (std::find(prot.begin(), prot.end(), name) == prot.end()) {
            prot.push_back(name);
        }
    };
    for (const auto& t : config.target_columns) ensure_protected(t);
    if (config.liquid_fuel_flag_column) {
        if (!table.has_column(*config.liquid_fuel_flag_column)) {
            throw DataError("liquid fuel flag column \"" +
                            *config.liquid_fuel_flag_column +
                            "\" not in table");
        }
        // The flag must survive the sparse-feature step to drive its own
        // step.
        ensure_protected(*config.liquid_fuel_flag_column);
    }

    PipelineReport report;
    Table current = table;
    const auto record = [&report](const char* name, const Table& before,
                                  const Table& after) {
        report.steps.push_back({name, before.n_rows(), after.n_rows(),
                                before.n_cols(), after.n_cols()});
    };

    const std::int64_t threshold = resolve_sparse_threshold(current, config);
    Table next = drop_sparse_features(current, threshold, prot);
    record(kStepLowDataFeatures, current, next);
    current = std::move(next);

    if (config.liquid_fuel_flag_column) {
        next = drop_liquid_fuel(current, *config.liquid_fuel_flag_column,
                                config.liquid_fuel_drop_value);
    } else {
        next = current; // step recorded as a no-op when no flag is configured
    }
    record(kStepLiquidFuel, current, next);
    current = std::move(next);

    next = drop_negative_targets(current, config.target_columns);
    record(kStepNegativeEmissions, current, next);
    current = std::move(next);

    return {std::move(current), std::move(report)};
}

std::string PipelineReport::to_csv() const {
    std::ostringstream out;
    out << "step,rows_before,rows_after,cols_before,cols_after\n";
    for (const auto& s : steps) {
        out << s.name << ',' << s.rows_before << ',' << s.rows_after << ','
            << s.cols_before << ',' << s.cols_after << '\n';
    }
    return out.str();
}

std::string PipelineReport::to_text() const {
    std::ostringstream out;
    if (steps.empty()) return "(empty pipeline report)\n";
    out << "Start: " << steps.front().rows_before << " rows, "
        << steps.front().cols_before << " features\n";
    for (const auto& s : steps) {
        const std::int64_t rows_removed = s.rows_before - s.rows_after;
        const int cols_removed = s.cols_before - s.cols_after;
        out << s.name << ": ";
        if (cols_removed != 0) {
            out << "removes " << cols_removed << " features";
            if (rows_removed != 0) out << ", " << rows_removed << " rows";
        } else if (rows_removed != 0) {
            out << "removes " << rows_removed << " rows";
        } else {
            out << "no change";
        }
        out << '\n';
    }
    out << "End: " << steps.back().rows_after << " rows, "
        << steps.back().cols_after << " features\n";
    return out.str();
}

} // namespace pemsbench
