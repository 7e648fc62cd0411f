#include "pemsbench/synthdata.hpp"

#include "pemsbench/errors.hpp"
#include "pemsbench/rng.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace pemsbench {
namespace {

constexpr int kNamedFeatures = 6;

struct Drivers {
    double load, pilot_split, t_inlet, p_inlet;
};

// Noise-free emission surrogates. NOx is smooth in the drivers with an
// interaction and a quadratic term; CO decays exponentially (convex) in
// load with a pressure/temperature cross term.
double surrogate_nox(const Drivers& d) {
    return 4.0 + 0.055 * d.load + 26.0 * d.pilot_split +
           0.028 * (d.t_inlet - 265.0) + 30.0 * (d.p_inlet - 0.96) +
           0.33 * (d.pilot_split - 0.08) * (d.load - 24.0) +
           0.0027 * (d.load - 75.0) * (d.load - 75.0);
}

double surrogate_co(const Drivers& d) {
    return 1.5 + 240.0 * std::exp(-(d.load - 24.0) / 16.0) +
           7.0 * (0.42 - d.pilot_split) +
           0.55 * (d.p_inlet - 0.96) * (d.t_inlet - 265.0);
}

} // namespace

// The baseline keeps the surrogates' additive structure but drops every
// interaction term and decays CO too slowly.
double baseline_nox(double load, double pilot_split, double t_inlet,
                    double p_inlet) {
    return 4.0 + 0.055 * load + 26.0 * pilot_split + 0.028 * (t_inlet - 265.0) +
           30.0 * (p_inlet - 0.96);
}

double baseline_co(double load, double pilot_split, double t_inlet,
                   double p_inlet) {
    (void)t_inlet;
    (void)p_inlet;
    return 1.5 + 240.0 * std::exp(-(load - 24.0) / 22.0) +
           5.0 * (0.42 - pilot_split);
}

const std::vector<std::string>& baseline_driver_columns() {
    static const std::vector<std::string> cols = {"load", "pilot_split",
                                                  "t_inlet", "p_inlet"};
    return cols;
}

BaselinePrediction baseline_predict(const Table& table, std::int64_t row) {
    if (row < 0 || row >= table.n_rows()) {
        throw DataError("baseline_predict: row " + std::to_string(row) +
                        " out of range");
    }
    double v[4];
    const auto& names = baseline_driver_columns();
    for (size_t i = 0; i < names.size(); ++i) {
        const int c = table.col_index(names[i]);
        if (table.is_missing(row, c)) {
            throw DataError("baseline_predict: driver cell (" +
                            std::to_string(row) + ", " + names[i] +
                            ") is masked");
        }
        v[i] = table.value(row, c);
    }
    BaselinePrediction p;
    p.nox = baseline_nox(v[0], v[1], v[2], v[3]);
    p.co = baseline_co(v[0], v[1], v[2], v[3]);
    return p;
}

void SynthConfig::validate() const {
    if (n_rows <= 0) throw ConfigError("n_rows must be positive");
    if (n_features < kNamedFeatures + 1) {
        throw ConfigError("n_features must be >= 7 to cover the named "
                          "physical drivers");
    }
    for (double rate : {missing_rate, negative_target_rate, liquid_fuel_rate,
                        outlier_rate}) {
        if (!(rate >= 0.0 && rate <= 1.0)) {
            throw ConfigError("rates must lie in [0, 1]");
        }
    }
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
    if (profile != "full" && profile != "cropped") {
        throw ConfigError("profile must be \"full\" or \"cropped\"");
    }
}

std::pair<Table, GroundTruth> generate(const SynthConfig& config) {
    config.validate();
    const bool cropped = config.profile == "cropped";
    const double load_lo = cropped ? 40.0 : 24.0;
    const double load_hi = cropped ? 110.0 : 126.0;
    const double missing_rate =
        cropped ? 0.5 * config.missing_rate : config.missing_rate;
    const int n_nuisance = config.n_features - kNamedFeatures;

    std::vector<std::string> names = {"load",      "pilot_split",
                                      "t_inlet",   "p_inlet",
                                      "fuel_flow", "liquid_fuel_flag"};
    for (int j = 0; j < n_nuisance; ++j) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "nuis_%02d", j);
        names.emplace_back(buf);
    }
    names.emplace_back("NOx");
    names.emplace_back("CO");
    Table t = Table::with_columns(std::move(names));
    const int n_cols = t.n_cols();
    const int nox_col = n_cols - 2;
    const int co_col = n_cols - 1;
    for (int c = 0; c < n_cols; ++c) {
        t.columns[c].resize(static_cast<size_t>(config.n_rows));
        t.missing[c].assign(static_cast<size_t>(config.n_rows), 0);
    }

    rng::Stream root(config.seed, "synthdata-v1");
    rng::Stream s_load = root.derive("load");
    rng::Stream s_pilot = root.derive("pilot_split");
    rng::Stream s_tin = root.derive("t_inlet");
    rng::Stream s_pin = root.derive("p_inlet");
    rng::Stream s_fuel = root.derive("fuel_flow");
    rng::Stream s_flag = root.derive("liquid_fuel_flag");
    rng::Stream s_noise_nox = root.derive("noise_nox");
    rng::Stream s_noise_co = root.derive("noise_co");
    rng::Stream s_outlier = root.derive("outlier");
    rng::Stream s_outlier_mag = root.derive("outlier_mag");
    rng::Stream s_neg_nox = root.derive("neg_nox");
    rng::Stream s_neg_co = root.derive("neg_co");

    // Per-nuisance mixing coefficients: each nuisance sensor is a fixed
    // linear blend of the drivers plus its own noise.
    struct NuisCoef {
        double bias, c_load, c_t, c_s, c_p;
    };
    std::vector<NuisCoef> nuis_coef(static_cast<size_t>(n_nuisance));
    std::vector<rng::Stream> s_nuis;
    s_nuis.reserve(static_cast<size_t>(n_nuisance));
    {
        rng::Stream coef = root.derive("nuis_coef");
        for (int j = 0; j < n_nuisance; ++j) {
            NuisCoef& nc = nuis_coef[static_cast<size_t>(j)];
            nc.bias = coef.next_uniform(-2.0, 2.0);
            nc.c_load = coef.next_uniform(-1.0, 1.0);
            nc.c_t = coef.next_uniform(-1.0, 1.0);
            nc.c_s = coef.next_uniform(-1.0, 1.0);
            nc.c_p = coef.next_uniform(-1.0, 1.0);
            s_nuis.push_back(root.derive("nuis_noise").derive(
                static_cast<std::uint64_t>(j)));
        }
    }
    std::vector<rng::Stream> s_miss;
    s_miss.reserve(static_cast<size_t>(n_cols));
    for (int c = 0; c < n_cols; ++c) {
        s_miss.push_back(
            root.derive("missing").derive(static_cast<std::uint64_t>(c)));
    }

    GroundTruth truth;
    truth.nox_clean.resize(static_cast<size_t>(config.n_rows));
    truth.co_clean.resize(static_cast<size_t>(config.n_rows));
    truth.co_outlier.assign(static_cast<size_t>(config.n_rows), 0);

    for (std::int64_t r = 0; r < config.n_rows; ++r) {
        const size_t ri = static_cast<size_t>(r);
        Drivers d;
        d.load = s_load.next_uniform(load_lo, load_hi);
        d.pilot_split = s_pilot.next_uniform(0.08, 0.42);
        d.t_inlet = s_tin.next_uniform(265.0, 315.0);
        d.p_inlet = s_pin.next_uniform(0.96, 1.08);
        const double fuel = 0.35 + 0.011 * d.load + 0.02 * s_fuel.next_normal();
        const double flag = s_flag.next_bernoulli(config.liquid_fuel_rate)
                                ? 1.0
                                : 0.0;

        t.columns[0][ri] = d.load;
        t.columns[1][ri] = d.pilot_split;
        t.columns[2][ri] = d.t_inlet;
        t.columns[3][ri] = d.p_inlet;
        t.columns[4][ri] = fuel;
        t.columns[5][ri] = flag;

        // Scaled driver coordinates shared by all nuisance sensors.
        const double z_load = (d.load - 75.0) / 51.0;
        const double z_t = (d.t_inlet - 290.0) / 25.0;
        const double z_s = (d.pilot_split - 0.25) / 0.17;
        const double z_p = (d.p_inlet - 1.02) / 0.06;
        for (int j = 0; j < n_nuisance; ++j) {
            const NuisCoef& nc = nuis_coef[static_cast<size_t>(j)];
            const double v = nc.bias + nc.c_load * z_load + nc.c_t * z_t +
                             nc.c_s * z_s + nc.c_p * z_p +
                             0.5 * s_nuis[static_cast<size_t>(j)].next_normal();
            t.columns[static_cast<size_t>(kNamedFeatures + j)][ri] = v;
        }

        const double nox_clean = surrogate_nox(d);
        const double co_clean = surrogate_co(d);
        truth.nox_clean[ri] = nox_clean;
        truth.co_clean[ri] = co_clean;

        double nox = nox_clean + config.noise_std * s_noise_nox.next_normal();
        double co = co_clean + 2.0 * config.noise_std * s_noise_co.next_normal();
        const bool outlier = s_outlier.next_bernoulli(config.outlier_rate);
        const double mag = s_outlier_mag.next_normal();
        if (outlier) {
            truth.co_outlier[ri] = 1;
            co *= 1.0 + std::exp(1.0 + 0.8 * mag);
        }
        if (s_neg_nox.next_bernoulli(config.negative_target_rate)) {
            nox = -std::fabs(nox) - 0.5;
        }
        if (s_neg_co.next_bernoulli(config.negative_target_rate)) {
            co = -std::fabs(co) - 0.5;
        }
        t.columns[static_cast<size_t>(nox_col)][ri] = nox;
        t.columns[static_cast<size_t>(co_col)][ri] = co;

        for (int c = 0; c < n_cols; ++c) {
            const bool maskable = c != nox_col && c != co_col;
            const bool mask =
                s_miss[static_cast<size_t>(c)].next_bernoulli(missing_rate);
            if (maskable && mask) {
                t.columns[static_cast<size_t>(c)][ri] = 0.0;
                t.missing[static_cast<size_t>(c)][ri] = 1;
            }
        }
    }
    return {std::move(t), std::move(truth)};
}

void save_ground_truth_csv(const GroundTruth& truth, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write \"" + path + "\"");
    out << "nox_clean,co_clean\n";
    char buf[40];
    for (size_t i = 0; i < truth.nox_clean.size(); ++i) {
        auto r1 = std::to_chars(buf, buf + sizeof(buf), truth.nox_clean[i]);
        out.write(buf, r1.ptr - buf);
        out << ',';
        auto r2 = std::to_chars(buf, buf + sizeof(buf), truth.co_clean[i]);
        out.write(buf, r2.ptr - buf);
        out << '\n';
    }
}

} // namespace pemsbench
