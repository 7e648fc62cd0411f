#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pemsbench/errors.hpp"
#include "pemsbench/rng.hpp"
#include "pemsbench/table.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace pemsbench;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const auto path =
        (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
    return path;
}

Table small_random_table(rng::Stream& s, int cols, int rows,
                         double missing_rate) {
    std::vector<std::string> names;
    for (int c = 0; c < cols; ++c) names.push_back("c" + std::to_string(c));
    Table t = Table::with_columns(names);
    std::vector<double> vals(static_cast<size_t>(cols));
    std::vector<std::uint8_t> mask(static_cast<size_t>(cols));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            vals[static_cast<size_t>(c)] = s.next_uniform(-5, 5);
            mask[static_cast<size_t>(c)] = s.next_bernoulli(missing_rate);
        }
        t.append_row(vals, mask);
    }
    return t;
}

} // namespace

TEST_CASE("load_csv masks empty cells") {
    const auto path = write_temp("t_mask.csv", "a,b\n1,2\n3,\n");
    const Table t = load_csv(path);
    CHECK(t.n_rows() == 2);
    CHECK(t.n_cols() == 2);
    CHECK(t.value(0, 0) == 1.0);
    CHECK_FALSE(t.is_missing(0, 1));
    CHECK(t.is_missing(1, 1));
    CHECK(t.value(1, 1) == 0.0); // canonical fill behind the mask
}

TEST_CASE("load_csv header-only file yields zero rows") {
    const auto path = write_temp("t_hdr.csv", "a,b,c\n");
    const Table t = load_csv(path);
    CHECK(t.n_rows() == 0);
    CHECK(t.n_cols() == 3);
}

TEST_CASE("load_csv errors carry row and column context") {
    const auto bad = write_temp("t_bad.csv", "a,b\n1,2\nx,4\n");
    try {
        load_csv(bad);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 1") != std::string::npos);
        CHECK(msg.find("\"a\"") != std::string::npos);
    }

    const auto ragged = write_temp("t_ragged.csv", "a,b\n1,2,3\n");
    CHECK_THROWS_AS(load_csv(ragged), DataError);
    CHECK_THROWS_AS(load_csv("/nonexistent/nope.csv"), DataError);
}

TEST_CASE("load_csv honors NA and NaN missing tokens") {
    const auto path = write_temp("t_na.csv", "a,b\nNA,1\n2,NaN\n");
    const Table t = load_csv(path);
    CHECK(t.is_missing(0, 0));
    CHECK(t.is_missing(1, 1));
    CHECK(t.value(1, 0) == 2.0);
}

TEST_CASE("column_stats over present cells only") {
    Table t = Table::with_columns({"a"});
    t.append_row({1.0}, {0});
    t.append_row({0.0}, {1});
    t.append_row({3.0}, {0});
    const ColumnStats s = column_stats(t, "a");
    CHECK(s.missing_count == 1);
    CHECK(s.has_values);
    CHECK(s.mean == doctest::Approx(2.0));
    CHECK(s.min == 1.0);
    CHECK(s.max == 3.0);

    Table full = Table::with_columns({"a"});
    full.append_row({0.0}, {1});
    full.append_row({0.0}, {1});
    const ColumnStats sf = column_stats(full, "a");
    CHECK(sf.missing_count == 2);
    CHECK_FALSE(sf.has_values);

    Table none = Table::with_columns({"a"});
    none.append_row({5.0}, {0});
    CHECK(column_stats(none, "a").missing_count == 0);
    CHECK_THROWS_AS(column_stats(none, "zzz"), DataError);
}

TEST_CASE("drop_columns") {
    rng::Stream s(3, "tables");
    const Table t = small_random_table(s, 4, 5, 0.2);

    CHECK(tables_equal(drop_columns(t, {}), t));
    const Table d = drop_columns(t, {"c1", "c3"});
    CHECK(d.n_cols() == 2);
    CHECK(d.column_names == std::vector<std::string>{"c0", "c2"});
    CHECK(d.n_rows() == t.n_rows());
    CHECK_THROWS_AS(drop_columns(t, {"c1", "c1"}), DataError);
    CHECK_THROWS_AS(drop_columns(t, {"nope"}), DataError);

    // 183-feature table loses 9 names -> 174 columns.
    std::vector<std::string> many;
    for (int i = 0; i < 183; ++i) many.push_back("f" + std::to_string(i));
    Table wide = Table::with_columns(many);
    std::vector<std::string> nine(many.begin(), many.begin() + 9);
    CHECK(drop_columns(wide, nine).n_cols() == 174);
}

TEST_CASE("filter_rows") {
    rng::Stream s(4, "tables");
    const Table t = small_random_table(s, 3, 3, 0.0);
    CHECK(tables_equal(filter_rows(t, {1, 1, 1}), t));

    const Table none = filter_rows(t, {0, 0, 0});
    CHECK(none.n_rows() == 0);
    CHECK(none.n_cols() == 3);

    const Table some = filter_rows(t, {1, 0, 1});
    CHECK(some.n_rows() == 2);
    CHECK(some.value(0, 0) == t.value(0, 0));
    CHECK(some.value(1, 0) == t.value(2, 0));

    CHECK_THROWS_AS(filter_rows(t, {1, 0}), DataError);
}

TEST_CASE("filter_rows composition equals conjunction (property)") {
    rng::Stream s(5, "tables");
    for (int trial = 0; trial < 20; ++trial) {
        const int rows = 1 + static_cast<int>(s.next_below(12));
        const Table t = small_random_table(s, 3, rows, 0.3);
        std::vector<std::uint8_t> m1(static_cast<size_t>(rows));
        std::vector<std::uint8_t> m2(static_cast<size_t>(rows));
        for (auto& x : m1) x = s.next_bernoulli(0.6);
        for (auto& x : m2) x = s.next_bernoulli(0.6);

        // Apply m1 then m2 (m2 indexes the filtered table).
        const Table t1 = filter_rows(t, m1);
        std::vector<std::uint8_t> m2_sub;
        for (int r = 0; r < rows; ++r) {
            if (m1[static_cast<size_t>(r)]) {
                m2_sub.push_back(m2[static_cast<size_t>(r)]);
            }
        }
        const Table composed = filter_rows(t1, m2_sub);

        // Brute-force row copy under the conjunction.
        std::vector<std::uint8_t> both(static_cast<size_t>(rows));
        for (int r = 0; r < rows; ++r) {
            both[static_cast<size_t>(r)] = m1[static_cast<size_t>(r)] &&
                                           m2[static_cast<size_t>(r)];
        }
        CHECK(tables_equal(composed, filter_rows(t, both)));
    }
}

TEST_CASE("csv round-trip is bit-identical") {
    rng::Stream s(6, "tables");
    const Table t = small_random_table(s, 5, 40, 0.15);
    const auto path =
        (std::filesystem::temp_directory_path() / "t_roundtrip.csv").string();
    save_csv(t, path);
    const Table back = load_csv(path);
    CHECK(tables_equal(t, back));
    std::remove(path.c_str());
}

TEST_CASE("missing_count sums to total masked cells") {
    rng::Stream s(8, "tables");
    const Table t = small_random_table(s, 6, 30, 0.25);
    std::int64_t total = 0;
    for (const auto& col : t.missing) {
        for (auto m : col) total += m;
    }
    std::int64_t by_stats = 0;
    for (const auto& name : t.column_names) {
        by_stats += column_stats(t, name).missing_count;
    }
    CHECK(total == by_stats);
}

TEST_CASE("table validates invariants") {
    CHECK_THROWS_AS(Table::with_columns({"a", "a"}), DataError);
    Table t = Table::with_columns({"a", "b"});
    t.append_row({1, 2}, {0, 0});
    CHECK_NOTHROW(t.validate());
    t.columns[0].push_back(3.0); // ragged on purpose
    CHECK_THROWS_AS(t.validate(), DataError);
}
