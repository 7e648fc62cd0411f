#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pemsbench/errors.hpp"
#include "pemsbench/evalharness.hpp"
#include "pemsbench/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace pemsbench;

namespace {

// Tukey-style outlier count: values beyond 1.5 IQR from the quartiles.
int iqr_outlier_count(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const size_t lo = static_cast<size_t>(pos);
        const size_t hi = std::min(lo + 1, values.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return values[lo] * (1.0 - frac) + values[hi] * frac;
    };
    const double q1 = quantile(0.25), q3 = quantile(0.75);
    const double iqr = q3 - q1;
    int count = 0;
    for (double v : values) {
        if (v < q1 - 1.5 * iqr || v > q3 + 1.5 * iqr) ++count;
    }
    return count;
}

} // namespace

TEST_CASE("generate is a pure function of the config") {
    SynthConfig c;
    c.n_rows = 200;
    auto [t1, g1] = generate(c);
    auto [t2, g2] = generate(c);
    CHECK(tables_equal(t1, t2));
    CHECK(g1.nox_clean == g2.nox_clean);
    CHECK(g1.co_clean == g2.co_clean);

    c.seed = 1;
    auto [t3, g3] = generate(c);
    CHECK_FALSE(tables_equal(t1, t3));
}

TEST_CASE("expected columns and shapes") {
    SynthConfig c;
    c.n_rows = 50;
    c.n_features = 9;
    auto [t, truth] = generate(c);
    CHECK(t.n_rows() == 50);
    CHECK(t.n_cols() == 11); // 9 features + 2 targets
    for (const char* name : {"load", "pilot_split", "t_inlet", "p_inlet",
                             "fuel_flow", "liquid_fuel_flag", "nuis_00",
                             "NOx", "CO"}) {
        CHECK(t.has_column(name));
    }
    CHECK(truth.nox_clean.size() == 50);
}

TEST_CASE("degenerate corruption: targets equal the ground truth") {
    SynthConfig c;
    c.n_rows = 120;
    c.noise_std = 0.0;
    c.missing_rate = 0.0;
    c.outlier_rate = 0.0;
    c.negative_target_rate = 0.0;
    auto [t, truth] = generate(c);
    const int nox = t.col_index("NOx");
    const int co = t.col_index("CO");
    for (std::int64_t r = 0; r < t.n_rows(); ++r) {
        CHECK(t.value(r, nox) == truth.nox_clean[static_cast<size_t>(r)]);
        CHECK(t.value(r, co) == truth.co_clean[static_cast<size_t>(r)]);
        CHECK_FALSE(t.is_missing(r, nox));
    }
}

TEST_CASE("ground truth is nonnegative and finite") {
    SynthConfig c;
    c.n_rows = 500;
    auto [t, truth] = generate(c);
    for (double v : truth.nox_clean) {
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
    }
    for (double v : truth.co_clean) {
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
    }
}

TEST_CASE("outlier count lands in the binomial 99% interval") {
    SynthConfig c;
    c.n_rows = 1000;
    c.outlier_rate = 0.02;
    auto [t, truth] = generate(c);
    std::int64_t count = 0;
    for (auto f : truth.co_outlier) count += f;
    const double mean = 1000 * 0.02;
    const double sd = std::sqrt(1000 * 0.02 * 0.98);
    CHECK(count >= static_cast<std::int64_t>(mean - 2.576 * sd));
    CHECK(count <= static_cast<std::int64_t>(mean + 2.576 * sd) + 1);
}

TEST_CASE("missing-cell count lands in the binomial 99% interval") {
    SynthConfig c;
    c.n_rows = 1000;
    c.n_features = 20;
    c.missing_rate = 0.1;
    auto [t, truth] = generate(c);
    std::int64_t masked = 0;
    for (const auto& col : t.missing) {
        for (auto m : col) masked += m;
    }
    const double n = 1000.0 * 20.0;
    const double mean = n * 0.1;
    const double sd = std::sqrt(n * 0.1 * 0.9);
    CHECK(masked >= static_cast<std::int64_t>(mean - 2.576 * sd));
    CHECK(masked <= static_cast<std::int64_t>(mean + 2.576 * sd) + 1);
    // Targets are never masked.
    CHECK(column_stats(t, "NOx").missing_count == 0);
    CHECK(column_stats(t, "CO").missing_count == 0);
}

TEST_CASE("CO shows far more spread outliers than NOx on every seed") {
    for (std::uint64_t seed : {0ull, 1ull, 2ull, 3ull, 4ull}) {
        SynthConfig c;
        c.n_rows = 800;
        c.seed = seed;
        auto [t, truth] = generate(c);
        const int nox = t.col_index("NOx");
        const int co = t.col_index("CO");
        std::vector<double> nv, cv;
        for (std::int64_t r = 0; r < t.n_rows(); ++r) {
            nv.push_back(t.value(r, nox));
            cv.push_back(t.value(r, co));
        }
        CHECK(iqr_outlier_count(cv) > iqr_outlier_count(nv));
    }
}

TEST_CASE("baseline ignores nuisance features exactly") {
    SynthConfig c;
    c.n_rows = 10;
    c.missing_rate = 0.0;
    auto [t, truth] = generate(c);
    const BaselinePrediction before = baseline_predict(t, 0);

    Table perturbed = t;
    for (const char* name : {"fuel_flow", "liquid_fuel_flag", "nuis_00",
                             "nuis_01"}) {
        const int cIdx = perturbed.col_index(name);
        perturbed.columns[static_cast<size_t>(cIdx)][0] += 42.0;
    }
    const BaselinePrediction after = baseline_predict(perturbed, 0);
    CHECK(before.nox == after.nox);
    CHECK(before.co == after.co);
}

TEST_CASE("baseline is finite and positive at a nominal operating point") {
    CHECK(baseline_nox(75.0, 0.25, 290.0, 1.02) > 0.0);
    CHECK(baseline_co(75.0, 0.25, 290.0, 1.02) > 0.0);
    CHECK(std::isfinite(baseline_nox(24.0, 0.08, 265.0, 0.96)));
    CHECK(std::isfinite(baseline_co(126.0, 0.42, 315.0, 1.08)));
}

TEST_CASE("baseline is deliberately mis-specified: MAE > 0 on clean data") {
    SynthConfig c;
    c.n_rows = 300;
    c.noise_std = 0.0;
    c.missing_rate = 0.0;
    c.outlier_rate = 0.0;
    c.negative_target_rate = 0.0;
    auto [t, truth] = generate(c);
    std::vector<double> nox_hat, co_hat;
    for (std::int64_t r = 0; r < t.n_rows(); ++r) {
        const auto p = baseline_predict(t, r);
        nox_hat.push_back(p.nox);
        co_hat.push_back(p.co);
    }
    CHECK(mae(truth.nox_clean, nox_hat) > 0.5);
    CHECK(mae(truth.co_clean, co_hat) > 1.0);
}

TEST_CASE("masked driver cell is an error") {
    SynthConfig c;
    c.n_rows = 5;
    c.missing_rate = 0.0;
    auto [t, truth] = generate(c);
    Table broken = t;
    const int load = broken.col_index("load");
    broken.columns[static_cast<size_t>(load)][2] = 0.0;
    broken.missing[static_cast<size_t>(load)][2] = 1;
    CHECK_NOTHROW(baseline_predict(broken, 0));
    CHECK_THROWS_AS(baseline_predict(broken, 2), DataError);
}

TEST_CASE("cropped profile narrows the load range") {
    SynthConfig c;
    c.n_rows = 400;
    c.profile = "cropped";
    auto [t, truth] = generate(c);
    const int load = t.col_index("load");
    for (std::int64_t r = 0; r < t.n_rows(); ++r) {
        if (t.is_missing(r, load)) continue;
        CHECK(t.value(r, load) >= 40.0);
        CHECK(t.value(r, load) <= 110.0);
    }
}

TEST_CASE("config validation") {
    SynthConfig c;
    c.n_rows = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SynthConfig{};
    c.n_features = 6;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SynthConfig{};
    c.missing_rate = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SynthConfig{};
    c.profile = "other";
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("load range spans the full 24..126 window") {
    SynthConfig c;
    c.n_rows = 2000;
    c.missing_rate = 0.0;
    auto [t, truth] = generate(c);
    const int load = t.col_index("load");
    double lo = 1e9, hi = -1e9;
    for (std::int64_t r = 0; r < t.n_rows(); ++r) {
        lo = std::min(lo, t.value(r, load));
        hi = std::max(hi, t.value(r, load));
    }
    CHECK(lo >= 24.0);
    CHECK(hi <= 126.0);
    CHECK(lo < 30.0);  // actually reaches near the edges
    CHECK(hi > 120.0);
}
