#include "pemsbench/table.hpp"

#include "pemsbench/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace pemsbench {

bool Table::has_column(const std::string& name) const {
    for (const auto& n : column_names) {
        if (n == name) return true;
    }
    return false;
}

int Table::col_index(const std::string& name) const {
    for (size_t i = 0; i < column_names.size(); ++i) {
        if (column_names[i] == name) return static_cast<int>(i);
    }
    throw DataError("unknown column \"" + name + "\"");
}

Table Table::with_columns(std::vector<std::string> names) {
    std::unordered_set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) {
            throw DataError("duplicate column name \"" + n + "\"");
        }
    }
    Table t;
    t.column_names = std::move(names);
    t.columns.resize(t.column_names.size());
    t.missing.resize(t.column_names.size());
    return t;
}

void Table::append_row(const std::vector<double>& values,
                       const std::vector<std::uint8_t>& mask) {
    if (values.size() != columns.size() || mask.size() != columns.size()) {
        throw DataError("append_row: field count does not match table width");
    }
    for (size_t c = 0; c < columns.size(); ++c) {
        columns[c].push_back(mask[c] ? 0.0 : values[c]);
        missing[c].push_back(mask[c] ? 1 : 0);
    }
}

void Table::validate() const {
    if (columns.size() != column_names.size() ||
        missing.size() != column_names.size()) {
        throw DataError("table: column count mismatch");
    }
    std::unordered_set<std::string> seen;
    for (const auto& n : column_names) {
        if (!seen.insert(n).second) {
            throw DataError("table: duplicate column name \"" + n + "\"");
        }
    }
    const size_t rows = columns.empty() ? 0 : columns[0].size();
    for (size_t c = 0; c < columns.size(); ++c) {
        if (columns[c].size() != rows || missing[c].size() != rows) {
            throw DataError("table: ragged column \"" + column_names[c] + "\"");
        }
        for (size_t r = 0; r < rows; ++r) {
            if (missing[c][r] && columns[c][r] != 0.0) {
                throw DataError("table: masked cell with nonzero backing "
                                "value in column \"" +
                                column_names[c] + "\"");
            }
        }
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace

Table load_csv(const std::string& path,
               const std::set<std::string>& missing_tokens) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open \"" + path + "\"");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("\"" + path + "\": empty file, header row required");
    }
    Table t = Table::with_columns(split_csv_line(line));
    const size_t width = t.column_names.size();

    std::vector<double> values(width);
    std::vector<std::uint8_t> mask(width);
    std::int64_t row = 0;
    while (std::getline(in, line)) {
        const auto fields = split_csv_line(line);
        if (fields.size() != width) {
            throw DataError("\"" + path + "\": data row " +
                            std::to_string(row) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(width));
        }
        for (size_t c = 0; c < width; ++c) {
            const std::string& f = fields[c];
            if (missing_tokens.count(f)) {
                values[c] = 0.0;
                mask[c] = 1;
                continue;
            }
            mask[c] = 0;
            double v = 0.0;
            auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
                throw DataError("\"" + path + "\": data row " +
                                std::to_string(row) + ", column \"" +
                                t.column_names[c] + "\": cannot parse \"" + f +
                                "\" as a number");
            }
            values[c] = v;
        }
        t.append_row(values, mask);
        ++row;
    }
    return t;
}

void save_csv(const Table& table, const std::string& path,
              const std::string& missing_token) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write \"" + path + "\"");
    }
    for (size_t c = 0; c < table.column_names.size(); ++c) {
        if (c) out << ',';
        out << table.column_names[c];
    }
    out << '\n';
    const std::int64_t rows = table.n_rows();
    for (std::int64_t r = 0; r < rows; ++r) {
        for (int c = 0; c < table.n_cols(); ++c) {
            if (c) out << ',';
            if (table.is_missing(r, c)) {
                out << missing_token;
            } else {
                out << format_double(table.value(r, c));
            }
        }
        out << '\n';
    }
    if (!out) {
        throw DataError("write failed for \"" + path + "\"");
    }
}

ColumnStats column_stats(const Table& table, const std::string& column) {
    const int c = table.col_index(column);
    ColumnStats s;
    double sum = 0.0;
    std::int64_t present = 0;
    for (std::int64_t r = 0; r < table.n_rows(); ++r) {
        if (table.is_missing(r, c)) {
            ++s.missing_count;
            continue;
        }
        const double v = table.value(r, c);
        if (!s.has_values) {
            s.min = s.max = v;
            s.has_values = true;
        } else {
            if (v < s.min) s.min = v;
            if (v > s.max) s.max = v;
        }
        sum += v;
        ++present;
    }
    if (s.has_values) s.mean = sum / static_cast<double>(present);
    return s;
}

Table drop_columns(const Table& table, const std::vector<std::string>& names) {
    std::unordered_set<std::string> to_drop;
    for (const auto& n : names) {
        table.col_index(n); // existence check
        if (!to_drop.insert(n).second) {
            throw DataError("drop_columns: duplicate name \"" + n + "\"");
        }
    }
    Table out;
    for (size_t c = 0; c < table.column_names.size(); ++c) {
        if (to_drop.count(table.column_names[c])) continue;
        out.column_names.push_back(table.column_names[c]);
        out.columns.push_back(table.columns[c]);
        out.missing.push_back(table.missing[c]);
    }
    return out;
}

Table filter_rows(const Table& table, const std::vector<std::uint8_t>& keep) {
    if (static_cast<std::int64_t>(keep.size()) != table.n_rows()) {
        throw DataError("filter_rows: mask length " +
                        std::to_string(keep.size()) + " != row count " +
                        std::to_string(table.n_rows()));
    }
    Table out = Table::with_columns(table.column_names);
    std::int64_t kept = 0;
    for (auto k : keep) kept += (k != 0);
    for (int c = 0; c < table.n_cols(); ++c) {
        out.columns[c].reserve(kept);
        out.missing[c].reserve(kept);
        for (std::int64_t r = 0; r < table.n_rows(); ++r) {
            if (!keep[r]) continue;
            out.columns[c].push_back(table.columns[c][r]);
            out.missing[c].push_back(table.missing[c][r]);
        }
    }
    return out;
}

bool tables_equal(const Table& a, const Table& b) {
    if (a.column_names != b.column_names) return false;
    if (a.n_rows() != b.n_rows()) return false;
    for (int c = 0; c < a.n_cols(); ++c) {
        for (std::int64_t r = 0; r < a.n_rows(); ++r) {
            if (a.missing[c][r] != b.missing[c][r]) return false;
            if (a.columns[c][r] != b.columns[c][r]) return false;
        }
    }
    return true;
}

} // namespace pemsbench
