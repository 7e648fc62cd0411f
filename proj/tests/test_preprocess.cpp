#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pemsbench/errors.hpp"
#include "pemsbench/preprocess.hpp"
#include "pemsbench/rng.hpp"
#include "pemsbench/table.hpp"

#include <string>
#include <vector>

using namespace pemsbench;

namespace {

// Fixture engineered so the pipeline removes 2 features, then 1, 3 and 2
// rows: cols 5 -> 3, rows 10 -> 9 -> 6 -> 4.
Table engineered_fixture() {
    Table t = Table::with_columns({"f1", "f2", "f3", "flag", "NOx"});
    struct Row {
        double f1;
        std::uint8_t f1m, f2m, f3m;
        double flag, nox;
        std::uint8_t noxm;
    };
    const std::vector<Row> rows = {
        {1.0, 0, 1, 0, 0.0, 1.0, 0},  // survives
        {2.0, 0, 1, 0, 1.0, 2.0, 0},  // liquid fuel
        {3.0, 0, 1, 0, 0.0, -5.0, 0}, // negative
        {4.0, 0, 0, 1, 0.0, -1.0, 0}, // negative
        {5.0, 0, 0, 1, 0.0, -0.5, 0}, // negative
        {6.0, 1, 0, 1, 0.0, 1.5, 0},  // f1 masked
        {7.0, 0, 0, 0, 0.0, 0.0, 1},  // NOx masked
        {8.0, 0, 0, 0, 0.0, 3.0, 0},  // survives
        {9.0, 0, 0, 0, 0.0, 4.0, 0},  // survives
        {10.0, 0, 0, 0, 0.0, 5.0, 0}, // survives
    };
    for (const auto& r : rows) {
        t.append_row({r.f1m ? 0.0 : r.f1, 0.0, 0.0, r.flag,
                      r.noxm ? 0.0 : r.nox},
                     {r.f1m, r.f2m, r.f3m, 0, r.noxm});
    }
    return t;
}

PreprocessConfig fixture_config() {
    PreprocessConfig c;
    c.sparse_feature_threshold = 2; // f2/f3 carry 3 masked cells each
    c.target_columns = {"NOx"};
    c.liquid_fuel_flag_column = "flag";
    c.liquid_fuel_drop_value = 1.0;
    return c;
}

} // namespace

TEST_CASE("drop_sparse_features") {
    Table t = Table::with_columns({"a", "b", "c", "d", "e"});
    // b and d get 4 masked cells each.
    for (int r = 0; r < 6; ++r) {
        const std::uint8_t m = r < 4 ? 1 : 0;
        t.append_row({1.0 * r, 0.0, 2.0 * r, 0.0, 3.0 * r}, {0, m, 0, m, 0});
    }
    CHECK(tables_equal(drop_sparse_features(t, t.n_rows(), {}), t));
    const Table dropped = drop_sparse_features(t, 3, {});
    CHECK(dropped.n_cols() == 3);
    CHECK(dropped.column_names == std::vector<std::string>{"a", "c", "e"});

    // Protection beats any threshold.
    const Table kept = drop_sparse_features(t, 0, {"b", "d"});
    CHECK(kept.has_column("b"));
    CHECK(kept.has_column("d"));
}

TEST_CASE("drop_negative_targets") {
    Table t = Table::with_columns({"x", "NOx", "CO"});
    t.append_row({1, 2.0, 3.0}, {0, 0, 0});
    t.append_row({2, -1.0, 3.0}, {0, 0, 0});
    t.append_row({3, 2.0, -0.1}, {0, 0, 0});
    t.append_row({4, 0.0, 1.0}, {0, 1, 0}); // masked target is not negative
    const Table out = drop_negative_targets(t, {"NOx", "CO"});
    CHECK(out.n_rows() == 2);
    CHECK(out.value(0, 0) == 1.0);
    CHECK(out.value(1, 0) == 4.0);

    Table clean = Table::with_columns({"NOx"});
    clean.append_row({0.0}, {0});
    CHECK(tables_equal(drop_negative_targets(clean, {"NOx"}), clean));
    CHECK_THROWS_AS(drop_negative_targets(clean, {"missing_col"}), DataError);
}

TEST_CASE("drop_negative_targets removes exactly the engineered 744 rows") {
    Table t = Table::with_columns({"NOx"});
    for (int r = 0; r < 9129; ++r) {
        t.append_row({r < 744 ? -1.0 : 1.0}, {0});
    }
    CHECK(drop_negative_targets(t, {"NOx"}).n_rows() == 9129 - 744);
}

TEST_CASE("drop_liquid_fuel") {
    Table t = Table::with_columns({"flag", "y"});
    for (int r = 0; r < 10; ++r) {
        t.append_row({r < 3 ? 1.0 : 0.0, 1.0 * r}, {0, 0});
    }
    CHECK(drop_liquid_fuel(t, "flag", 1.0).n_rows() == 7);
    CHECK(tables_equal(drop_liquid_fuel(t, "flag", 9.0), t));
    CHECK_THROWS_AS(drop_liquid_fuel(t, "nope", 1.0), DataError);
}

TEST_CASE("drop_liquid_fuel removes exactly the engineered 5752 rows") {
    Table t = Table::with_columns({"flag"});
    for (int r = 0; r < 9000; ++r) t.append_row({r < 5752 ? 1.0 : 0.0}, {0});
    CHECK(drop_liquid_fuel(t, "flag", 1.0).n_rows() == 9000 - 5752);
}

TEST_CASE("drop_rows_with_missing") {
    Table t = Table::with_columns({"a", "b"});
    t.append_row({1, 2}, {0, 0});
    t.append_row({0, 3}, {1, 0});
    t.append_row({4, 5}, {0, 0});
    t.append_row({6, 0}, {0, 1});
    const Table out = drop_rows_with_missing(t);
    CHECK(out.n_rows() == 2);
    CHECK(out.value(0, 0) == 1.0);
    CHECK(out.value(1, 0) == 4.0);

    Table clean = Table::with_columns({"a"});
    clean.append_row({1}, {0});
    CHECK(tables_equal(drop_rows_with_missing(clean), clean));

    Table all_masked = Table::with_columns({"a"});
    all_masked.append_row({0}, {1});
    all_masked.append_row({0}, {1});
    CHECK(drop_rows_with_missing(all_masked).n_rows() == 0);
}

TEST_CASE("run_pipeline reproduces the engineered ledger") {
    const Table t = engineered_fixture();
    auto [cleaned, report] = run_pipeline(t, fixture_config());

    REQUIRE(report.steps.size() == 4);
    CHECK(report.steps[0].name == kStepLowDataFeatures);
    CHECK(report.steps[1].name == kStepLiquidFuel);
    CHECK(report.steps[2].name == kStepNegativeEmissions);
    CHECK(report.steps[3].name == kStepMissingValues);

    CHECK(report.steps[0].cols_before == 5);
    CHECK(report.steps[0].cols_after == 3);
    CHECK(report.steps[0].rows_before == 10);
    CHECK(report.steps[0].rows_after == 10);
    CHECK(report.steps[1].rows_after == 9);
    CHECK(report.steps[2].rows_after == 6);
    CHECK(report.steps[3].rows_after == 4);
    CHECK(cleaned.n_rows() == 4);
    CHECK(cleaned.n_cols() == 3);

    // Chained counts: rows_after of step k equals rows_before of step k+1.
    for (size_t i = 0; i + 1 < report.steps.size(); ++i) {
        CHECK(report.steps[i].rows_after == report.steps[i + 1].rows_before);
        CHECK(report.steps[i].cols_after == report.steps[i + 1].cols_before);
    }

    // Final table invariants: nothing masked, no negative target.
    for (int c = 0; c < cleaned.n_cols(); ++c) {
        for (std::int64_t r = 0; r < cleaned.n_rows(); ++r) {
            CHECK_FALSE(cleaned.is_missing(r, c));
        }
    }
    const int nox = cleaned.col_index("NOx");
    for (std::int64_t r = 0; r < cleaned.n_rows(); ++r) {
        CHECK(cleaned.value(r, nox) >= 0.0);
    }

    // Idempotence.
    auto [again, report2] = run_pipeline(cleaned, fixture_config());
    CHECK(tables_equal(again, cleaned));
    for (const auto& s : report2.steps) {
        CHECK(s.rows_before == s.rows_after);
        CHECK(s.cols_before == s.cols_after);
    }
}

TEST_CASE("run_pipeline on a clean table is the identity") {
    Table t = Table::with_columns({"x", "NOx", "CO"});
    for (int r = 0; r < 5; ++r) t.append_row({1.0 * r, 1.0, 2.0}, {0, 0, 0});
    PreprocessConfig c;
    auto [out, report] = run_pipeline(t, c);
    CHECK(tables_equal(out, t));
    for (const auto& s : report.steps) {
        CHECK(s.rows_before == s.rows_after);
        CHECK(s.cols_before == s.cols_after);
    }
}

TEST_CASE("auto sparse threshold follows the worst target column") {
    Table t = Table::with_columns({"a", "b", "NOx", "CO"});
    // NOx has 2 masked cells, CO has 1; auto threshold = 3.
    // a has 4 masked cells (dropped), b has 3 (kept).
    for (int r = 0; r < 8; ++r) {
        t.append_row({0.0, 0.0, 0.0, 0.0},
                     {static_cast<std::uint8_t>(r < 4),
                      static_cast<std::uint8_t>(r < 3),
                      static_cast<std::uint8_t>(r < 2),
                      static_cast<std::uint8_t>(r < 1)});
    }
    PreprocessConfig c;
    c.sparse_auto = true;
    CHECK(resolve_sparse_threshold(t, c) == 3);
    auto [out, report] = run_pipeline(t, c);
    CHECK_FALSE(out.has_column("a"));
    CHECK(report.steps[0].cols_after == 3);
}

TEST_CASE("pipeline output only deletes, never edits (property)") {
    rng::Stream s(21, "pipeline");
    Table t = Table::with_columns({"load", "flag", "NOx", "CO"});
    for (int r = 0; r < 60; ++r) {
        t.append_row({s.next_uniform(0, 100), s.next_bernoulli(0.2) ? 1.0 : 0.0,
                      s.next_uniform(-1, 5), s.next_uniform(-1, 5)},
                     {s.next_bernoulli(0.1), 0, 0, 0});
    }
    PreprocessConfig c;
    c.liquid_fuel_flag_column = "flag";
    auto [out, report] = run_pipeline(t, c);
    // Every surviving row appears verbatim in the input.
    const int n = out.n_cols();
    for (std::int64_t r = 0; r < out.n_rows(); ++r) {
        bool found = false;
        for (std::int64_t r0 = 0; r0 < t.n_rows() && !found; ++r0) {
            bool same = true;
            for (int cIdx = 0; cIdx < n && same; ++cIdx) {
                const int src = t.col_index(out.column_names[
                    static_cast<size_t>(cIdx)]);
                same = t.value(r0, src) == out.value(r, cIdx) &&
                       t.is_missing(r0, src) == out.is_missing(r, cIdx);
            }
            found = same;
        }
        CHECK(found);
    }
    CHECK(report.steps.size() == 4);
}

TEST_CASE("config validation") {
    PreprocessConfig c;
    c.sparse_feature_threshold = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = PreprocessConfig{};
    c.protected_columns = {"other"}; // targets must be inside when non-empty
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(PreprocessConfig::profile_threshold("full") == 18100);
    CHECK(PreprocessConfig::profile_threshold("cropped") == 3000);
    CHECK_THROWS_AS(PreprocessConfig::profile_threshold("x"), ConfigError);
}
