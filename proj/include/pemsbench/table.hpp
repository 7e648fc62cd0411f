#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace pemsbench {

// Column-oriented numeric table with an explicit per-cell missing mask.
// Masked cells always store 0.0 so that serialization and comparisons are
// well defined; consumers must consult the mask before reading a value.
// Tables are treated as immutable after construction: every transformation
// returns a new table, which makes them safe to share across threads.
struct Table {
    std::vector<std::string> column_names;
    std::vector<std::vector<double>> columns;       // [col][row]
    std::vector<std::vector<std::uint8_t>> missing; // 1 = missing, same shape

    std::int64_t n_rows() const {
        return columns.empty() ? 0
                               : static_cast<std::int64_t>(columns[0].size());
    }
    int n_cols() const { return static_cast<int>(columns.size()); }

    bool has_column(const std::string& name) const;
    // Throws DataError on unknown name.
    int col_index(const std::string& name) const;

    bool is_missing(std::int64_t row, int col) const {
        return missing[static_cast<size_t>(col)][static_cast<size_t>(row)] != 0;
    }
    double value(std::int64_t row, int col) const {
        return columns[static_cast<size_t>(col)][static_cast<size_t>(row)];
    }

    // Builds an empty table with the given header, validating name
    // uniqueness.
    static Table with_columns(std::vector<std::string> names);

    void append_row(const std::vector<double>& values,
                    const std::vector<std::uint8_t>& mask);

    // Shape + invariant check; throws DataError on violation. Used by tests
    // and by load paths.
    void validate() const;
};

struct ColumnStats {
    std::int64_t missing_count = 0;
    // Moments over present cells only; meaningless when has_values is false
    // (fully masked column).
    bool has_values = false;
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

// CSV ingestion. Comma-delimited, mandatory header row, numeric cells; a
// cell equal to any missing token (default: "", "NA", "NaN") is masked.
// Errors (unreadable file, ragged rows, unparseable cells) name the 0-based
// data row and the column.
Table load_csv(const std::string& path,
               const std::set<std::string>& missing_tokens = {"", "NA",
                                                              "NaN"});

// Writes the table back out; masked cells are serialized as `missing_token`.
// Doubles are written in shortest round-trip form, so load(save(t)) == t
// bit for bit.
void save_csv(const Table& table, const std::string& path,
              const std::string& missing_token = "");

ColumnStats column_stats(const Table& table, const std::string& column);

// Returns a copy lacking exactly `names`; duplicates in the list are an
// error.
Table drop_columns(const Table& table, const std::vector<std::string>& names);

// Keeps rows where keep[i] != 0, preserving order. keep.size() must equal
// n_rows.
Table filter_rows(const Table& table, const std::vector<std::uint8_t>& keep);

bool tables_equal(const Table& a, const Table& b); // bit-exact compare

} // namespace pemsbench
