#pragma once

#include "pemsbench/table.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace pemsbench {

// Seeded generator of gas-turbine-like tabular data with known ground-truth
// emission surrogates, plus the fixed parametric baseline predictor that
// stands in for a first-principles emissions model.
//
// Feature columns, in order: load, pilot_split, t_inlet, p_inlet, fuel_flow,
// liquid_fuel_flag, then nuis_00.. correlated nuisance sensors. Targets NOx
// and CO come last. All randomness flows through the counter-based RNG in
// rng.hpp, so a config fully determines the output bytes.
struct SynthConfig {
    std::int64_t n_rows = 1200;
    // Non-target columns; the first six are the named columns above, the
    // rest are nuisance sensors. Must be >= 7.
    int n_features = 12;
    std::uint64_t seed = 0;

    // Additive Gaussian noise std on NOx; CO uses twice this value.
    double noise_std = 0.35;
    // Per non-target cell.
    double missing_rate = 0.03;
    // Per target cell; corrupted cells become strictly negative.
    double negative_target_rate = 0.02;
    // Per row.
    double liquid_fuel_rate = 0.06;
    // Per row; multiplies observed CO by a heavy-tailed lognormal factor so
    // CO shows far more outliers than NOx.
    double outlier_rate = 0.015;

    // "full" draws load over the whole 24..126% range; "cropped" narrows it
    // to 40..110% and halves the missing rate, standing in for a pre-filtered
    // variant of the same rig. The real pre-filters behind that split are
    // not public; this knob only mimics their effect on data availability.
    std::string profile = "full";

    void validate() const;
};

struct GroundTruth {
    std::vector<double> nox_clean; // noise-free surrogates, always >= 0
    std::vector<double> co_clean;
    std::vector<std::uint8_t> co_outlier; // rows hit by the outlier factor
};

std::pair<Table, GroundTruth> generate(const SynthConfig& config);

// Driver columns the baseline reads; everything else is ignored by it.
const std::vector<std::string>& baseline_driver_columns();

// Training-free parametric predictions from the driver cells of one row.
// The functional form deliberately omits the surrogate's interaction terms
// (and uses a wrong CO decay constant), so trained models can beat it.
// Throws DataError if a driver cell is masked or a driver column is absent.
struct BaselinePrediction {
    double nox = 0.0;
    double co = 0.0;
};
BaselinePrediction baseline_predict(const Table& table, std::int64_t row);

// Scalar cores, exposed for tests and for precomputing adapter columns.
double baseline_nox(double load, double pilot_split, double t_inlet,
                    double p_inlet);
double baseline_co(double load, double pilot_split, double t_inlet,
                   double p_inlet);

// Writes the nox_clean/co_clean sidecar next to the data CSV.
void save_ground_truth_csv(const GroundTruth& truth, const std::string& path);

} // namespace pemsbench
