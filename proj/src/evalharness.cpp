#include "pemsbench/evalharness.hpp"

#include "pemsbench/errors.hpp"
#include "pemsbench/kernels.hpp"
#include "pemsbench/preprocess.hpp"
#include "pemsbench/rng.hpp"
#include "pemsbench/synthdata.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace pemsbench {

using nlohmann::json;

double mae(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw DataError("mae: length mismatch");
    if (y.empty()) throw DataError("mae: empty vectors");
    const double s = kernels::active().abs_err_sum(
        y.data(), y_hat.data(), static_cast<std::int64_t>(y.size()));
    return s / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw DataError("rmse: length mismatch");
    if (y.empty()) throw DataError("rmse: empty vectors");
    const double s = kernels::active().sq_err_sum(
        y.data(), y_hat.data(), static_cast<std::int64_t>(y.size()));
    return std::sqrt(s / static_cast<double>(y.size()));
}

void CvPlan::validate() const {
    if (n_repeats < 1) throw ConfigError("cv: n_repeats must be >= 1");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("cv: test_fraction must lie in (0, 1)");
    }
}

std::pair<Table, Table> subsample_split(const Table& table,
                                        std::uint64_t seed,
                                        double test_fraction) {
    const std::int64_t n = table.n_rows();
    if (n < 2) throw DataError("subsample_split: need at least 2 rows");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("subsample_split: test_fraction must lie in (0, 1)");
    }
    const std::int64_t n_test =
        std::llround(test_fraction * static_cast<double>(n));
    if (n_test < 1 || n_test >= n) {
        throw DataError("subsample_split: degenerate partition (" +
                        std::to_string(n_test) + " test rows of " +
                        std::to_string(n) + ")");
    }
    std::vector<std::int64_t> order(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    rng::Stream s(seed, "cv-split-v1");
    for (std::int64_t i = n - 1; i > 0; --i) {
        const std::int64_t j = static_cast<std::int64_t>(
            s.next_below(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    std::vector<std::uint8_t> in_test(static_cast<size_t>(n), 0);
    for (std::int64_t i = 0; i < n_test; ++i) {
        in_test[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
    }
    std::vector<std::uint8_t> in_train(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        in_train[static_cast<size_t>(i)] = in_test[static_cast<size_t>(i)] ? 0
                                                                           : 1;
    }
    return {filter_rows(table, in_train), filter_rows(table, in_test)};
}

ModelSpec gbdt_spec(const GbdtParams& params) {
    ModelSpec spec;
    spec.name = "gbdt";
    spec.fit = [params](const Table& train, const std::string& target,
                        const std::vector<std::string>& excluded,
                        std::uint64_t) -> Predictor {
        GbdtModel model = train_gbdt(train, target, params, excluded);
        return [model = std::move(model)](const Table& t) {
            return predict_gbdt(model, t);
        };
    };
    return spec;
}

ModelSpec saint_spec(const SaintConfig& config) {
    ModelSpec spec;
    spec.name = "saint";
    spec.fit = [config](const Table& train, const std::string& target,
                        const std::vector<std::string>& excluded,
                        std::uint64_t seed) -> Predictor {
        SaintConfig cfg = config;
        cfg.seed = rng::mix64(cfg.seed ^ rng::mix64(seed + 1));
        SaintTrainResult res = train_saint(train, target, cfg, excluded);
        // Prediction needs the same feature layout as training.
        std::vector<std::string> drop = excluded;
        drop.push_back(target);
        return [model = std::move(res.model), drop](const Table& t) {
            std::vector<std::string> present;
            for (const auto& name : drop) {
                if (t.has_column(name)) present.push_back(name);
            }
            return predict_saint(model, drop_columns(t, present));
        };
    };
    return spec;
}

ModelSpec baseline_parametric_spec() {
    ModelSpec spec;
    spec.name = "baseline";
    spec.trainable = false;
    spec.fit = [](const Table&, const std::string& target,
                  const std::vector<std::string>&,
                  std::uint64_t) -> Predictor {
        const bool is_nox = target == "NOx";
        if (!is_nox && target != "CO") {
            throw ConfigError("parametric baseline predicts NOx or CO, not \"" +
                              target + "\"");
        }
        return [is_nox](const Table& t) {
            std::vector<double> out;
            out.reserve(static_cast<size_t>(t.n_rows()));
            for (std::int64_t r = 0; r < t.n_rows(); ++r) {
                const BaselinePrediction p = baseline_predict(t, r);
                out.push_back(is_nox ? p.nox : p.co);
            }
            return out;
        };
    };
    return spec;
}

ModelSpec baseline_column_spec(const std::string& prefix) {
    ModelSpec spec;
    spec.name = "baseline";
    spec.trainable = false;
    spec.fit = [prefix](const Table&, const std::string& target,
                        const std::vector<std::string>&,
                        std::uint64_t) -> Predictor {
        const std::string column = prefix + target;
        return [column](const Table& t) {
            const int c = t.col_index(column);
            std::vector<double> out;
            out.reserve(static_cast<size_t>(t.n_rows()));
            for (std::int64_t r = 0; r < t.n_rows(); ++r) {
                if (t.is_missing(r, c)) {
                    throw DataError("baseline column \"" + column +
                                    "\" masked at row " + std::to_string(r));
                }
                out.push_back(t.value(r, c));
            }
            return out;
        };
    };
    return spec;
}

namespace {

void finish_row(ReportRow& row) {
    const size_t n = row.repeats.size();
    double s = 0.0;
    for (double v : row.repeats) s += v;
    row.mean = s / static_cast<double>(n);
    if (n < 2) {
        row.stddev = 0.0;
        return;
    }
    double ss = 0.0;
    for (double v : row.repeats) ss += (v - row.mean) * (v - row.mean);
    row.stddev = std::sqrt(ss / static_cast<double>(n - 1));
}

} // namespace

EvalReport cross_validate(const Table& table, const std::string& target,
                          const std::vector<ModelSpec>& models,
                          const CvPlan& plan,
                          const std::vector<std::string>& excluded,
                          int n_features_key, int threads) {
    plan.validate();
    table.col_index(target); // existence check
    if (models.empty()) throw ConfigError("cross_validate: no models");

    int n_feat = 0;
    for (const auto& name : table.column_names) {
        if (name == target) continue;
        if (std::find(excluded.begin(), excluded.end(), name) !=
            excluded.end()) {
            continue;
        }
        ++n_feat;
    }
    if (n_features_key < 0) n_features_key = n_feat;

    // results[repeat][model] -> {mae, rmse}
    std::vector<std::vector<std::pair<double, double>>> results(
        static_cast<size_t>(plan.n_repeats),
        std::vector<std::pair<double, double>>(models.size()));
    std::vector<std::exception_ptr> errors(
        static_cast<size_t>(plan.n_repeats));

    const auto run_repeat = [&](int rep) {
        try {
            const std::uint64_t seed =
                plan.base_seed + static_cast<std::uint64_t>(rep);
            auto [train, test] = subsample_split(table, seed,
                                                 plan.test_fraction);
            const int tcol = test.col_index(target);
            const auto& y = test.columns[static_cast<size_t>(tcol)];
            for (size_t mi = 0; mi < models.size(); ++mi) {
                Predictor predict =
                    models[mi].fit(train, target, excluded, seed);
                const std::vector<double> y_hat = predict(test);
                if (y_hat.size() != y.size()) {
                    throw NumericError("model \"" + models[mi].name +
                                       "\" returned wrong prediction count");
                }
                results[static_cast<size_t>(rep)][mi] = {mae(y, y_hat),
                                                         rmse(y, y_hat)};
            }
        } catch (...) {
            errors[static_cast<size_t>(rep)] = std::current_exception();
        }
    };

    int n_threads = threads;
    if (n_threads <= 0) {
        n_threads = static_cast<int>(std::thread::hardware_concurrency());
        if (n_threads < 1) n_threads = 1;
    }
    n_threads = std::min(n_threads, plan.n_repeats);
    if (n_threads <= 1) {
        for (int rep = 0; rep < plan.n_repeats; ++rep) run_repeat(rep);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < n_threads; ++w) {
            pool.emplace_back([&]() {
                for (;;) {
                    const int rep = next.fetch_add(1);
                    if (rep >= plan.n_repeats) return;
                    run_repeat(rep);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    for (int rep = 0; rep < plan.n_repeats; ++rep) {
        if (errors[static_cast<size_t>(rep)]) {
            try {
                std::rethrow_exception(errors[static_cast<size_t>(rep)]);
            } catch (const std::exception& e) {
                throw DataError("repeat " + std::to_string(rep) + ": " +
                                e.what());
            }
        }
    }

    EvalReport report;
    for (size_t mi = 0; mi < models.size(); ++mi) {
        for (int metric = 0; metric < 2; ++metric) {
            ReportRow row;
            row.model = models[mi].name;
            row.target = target;
            row.n_features = n_features_key;
            row.n_rows = table.n_rows();
            row.metric = metric == 0 ? "MAE" : "RMSE";
            for (int rep = 0; rep < plan.n_repeats; ++rep) {
                const auto& pr = results[static_cast<size_t>(rep)][mi];
                row.repeats.push_back(metric == 0 ? pr.first : pr.second);
            }
            finish_row(row);
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

void BenchConfig::validate() const {
    if (targets.empty()) throw ConfigError("bench: no targets");
    if (models.empty()) throw ConfigError("bench: no models");
    for (const auto& m : models) {
        if (m != "gbdt" && m != "saint" && m != "baseline") {
            throw ConfigError("bench: unknown model \"" + m + "\"");
        }
    }
    if (baseline_mode != "parametric" && baseline_mode != "column") {
        throw ConfigError("bench: baseline_mode must be parametric or column");
    }
    gbdt.validate();
    saint.validate();
    plan.validate();
}

namespace {

std::vector<ModelSpec> build_specs(const BenchConfig& config) {
    std::vector<ModelSpec> specs;
    for (const auto& name : config.models) {
        if (name == "gbdt") {
            specs.push_back(gbdt_spec(config.gbdt));
        } else if (name == "saint") {
            specs.push_back(saint_spec(config.saint));
        } else {
            specs.push_back(config.baseline_mode == "parametric"
                                ? baseline_parametric_spec()
                                : baseline_column_spec(
                                      config.baseline_column_prefix));
        }
    }
    return specs;
}

std::vector<std::string> excluded_for_target(const BenchConfig& config,
                                             const std::string& target,
                                             const Table& table) {
    // Model inputs never include any target or explicitly excluded column;
    // in column mode the adapter columns are data, not features.
    std::vector<std::string> out;
    const auto add = [&out, &table](const std::string& name) {
        if (!table.has_column(name)) return;
        if (std::find(out.begin(), out.end(), name) == out.end()) {
            out.push_back(name);
        }
    };
    for (const auto& t : config.targets) {
        if (t != target) add(t);
    }
    for (const auto& e : config.excluded_features) add(e);
    if (config.baseline_mode == "column") {
        for (const auto& t : config.targets) {
            add(config.baseline_column_prefix + t);
        }
    }
    return out;
}

} // namespace

EvalReport run_benchmark(const Table& cleaned, const BenchConfig& config) {
    config.validate();
    const std::vector<ModelSpec> specs = build_specs(config);
    EvalReport report;
    for (const auto& target : config.targets) {
        EvalReport part = cross_validate(
            cleaned, target, specs, config.plan,
            excluded_for_target(config, target, cleaned), -1, config.threads);
        for (auto& row : part.rows) report.rows.push_back(std::move(row));
    }
    return report;
}

EvalReport ablation_sweep(const Table& base, const BenchConfig& config,
                          const std::vector<int>& feature_counts) {
    config.validate();
    if (feature_counts.empty()) {
        throw ConfigError("ablation: feature_counts must not be empty");
    }
    for (size_t i = 0; i + 1 < feature_counts.size(); ++i) {
        if (feature_counts[i] <= feature_counts[i + 1]) {
            throw ConfigError("ablation: feature_counts must be descending");
        }
    }
    const Table cleaned = drop_rows_with_missing(base);
    const std::vector<ModelSpec> specs = build_specs(config);
    const bool parametric_baseline =
        config.baseline_mode == "parametric" &&
        std::find(config.models.begin(), config.models.end(), "baseline") !=
            config.models.end();

    EvalReport report;
    for (const auto& target : config.targets) {
        const std::vector<std::string> excluded =
            excluded_for_target(config, target, cleaned);
        GbdtModel reference =
            train_gbdt(cleaned, target, config.gbdt, excluded);
        const auto ranking = feature_importance(reference);
        const int available = static_cast<int>(ranking.size());

        for (int k : feature_counts) {
            if (k < 1 || k > available) {
                throw DataError("ablation: feature count " +
                                std::to_string(k) + " exceeds available " +
                                std::to_string(available));
            }
            // Keep the top-k features (least important dropped first), the
            // targets, required baseline inputs, and adapter columns.
            std::unordered_set<std::string> keep;
            for (int i = 0; i < k; ++i) {
                keep.insert(ranking[static_cast<size_t>(i)].first);
            }
            std::vector<std::string> extra_excluded;
            for (const auto& t : config.targets) keep.insert(t);
            if (config.baseline_mode == "column") {
                for (const auto& t : config.targets) {
                    const std::string col = config.baseline_column_prefix + t;
                    if (base.has_column(col)) keep.insert(col);
                }
            }
            if (parametric_baseline) {
                for (const auto& d : baseline_driver_columns()) {
                    if (keep.insert(d).second) {
                        // Retained for the baseline only; not a model input.
                        extra_excluded.push_back(d);
                    }
                }
            }
            std::vector<std::string> to_drop;
            for (const auto& name : base.column_names) {
                if (!keep.count(name)) to_drop.push_back(name);
            }
            const Table restricted_clean =
                drop_rows_with_missing(drop_columns(base, to_drop));

            std::vector<std::string> sub_excluded =
                excluded_for_target(config, target, restricted_clean);
            for (const auto& e : extra_excluded) {
                if (std::find(sub_excluded.begin(), sub_excluded.end(), e) ==
                    sub_excluded.end()) {
                    sub_excluded.push_back(e);
                }
            }
            EvalReport part =
                cross_validate(restricted_clean, target, specs, config.plan,
                               sub_excluded, k, config.threads);
            for (auto& row : part.rows) report.rows.push_back(std::move(row));
        }
    }
    return report;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

} // namespace

std::string report_to_csv(const EvalReport& report) {
    if (report.rows.empty()) throw DataError("empty report");
    const size_t repeats = report.rows.front().repeats.size();
    std::ostringstream out;
    out << "model,target,n_features,metric,mean,std";
    for (size_t i = 0; i < repeats; ++i) out << ",repeat_" << i;
    out << '\n';
    for (const auto& row : report.rows) {
        out << row.model << ',' << row.target << ',' << row.n_features << ','
            << row.metric << ',' << fmt_double(row.mean) << ','
            << fmt_double(row.stddev);
        for (double v : row.repeats) out << ',' << fmt_double(v);
        out << '\n';
    }
    return out.str();
}

std::string report_to_json(const EvalReport& report) {
    if (report.rows.empty()) throw DataError("empty report");
    json rows = json::array();
    for (const auto& row : report.rows) {
        json r;
        r["model"] = row.model;
        r["target"] = row.target;
        r["n_features"] = row.n_features;
        r["n_rows"] = row.n_rows;
        r["metric"] = row.metric;
        r["mean"] = row.mean;
        r["std"] = row.stddev;
        r["repeats"] = row.repeats;
        rows.push_back(std::move(r));
    }
    json j;
    j["format"] = "pemsbench-evalreport-v1";
    j["rows"] = rows;
    return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.at("format").get<std::string>() != "pemsbench-evalreport-v1") {
        throw DataError("report: unknown format");
    }
    EvalReport report;
    for (const auto& r : j.at("rows")) {
        ReportRow row;
        row.model = r.at("model").get<std::string>();
        row.target = r.at("target").get<std::string>();
        row.n_features = r.at("n_features").get<int>();
        row.n_rows = r.at("n_rows").get<std::int64_t>();
        row.metric = r.at("metric").get<std::string>();
        row.mean = r.at("mean").get<double>();
        row.stddev = r.at("std").get<double>();
        row.repeats = r.at("repeats").get<std::vector<double>>();
        report.rows.push_back(std::move(row));
    }
    return report;
}

void report_emit(const EvalReport& report, const std::string& path,
                 ReportFormat format) {
    const std::string text = format == ReportFormat::csv
                                 ? report_to_csv(report)
                                 : report_to_json(report);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write \"" + path + "\"");
    out << text;
    if (!out) throw DataError("write failed for \"" + path + "\"");
}

} // namespace pemsbench
