// pemsbench: synthetic-data emissions benchmark driver.
//
// Subcommands: synth | preprocess | bench | ablate. Every run is fully
// determined by (config, seed): outputs are byte-identical across repeat
// runs, and each subcommand writes a <name>.provenance file holding the
// resolved configuration plus the tool version.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
// failure.

#include "pemsbench/errors.hpp"
#include "pemsbench/evalharness.hpp"
#include "pemsbench/kernels.hpp"
#include "pemsbench/kvconfig.hpp"
#include "pemsbench/preprocess.hpp"
#include "pemsbench/synthdata.hpp"
#include "pemsbench/table.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;
using namespace pemsbench;

struct CommonArgs {
    std::string config_path;
    std::optional<std::int64_t> seed;
    std::string out_dir;
    std::string format; // csv | json | both ("" = subcommand default)
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path,
                    "Flat key=value config file");
    cmd->add_option("--seed", args.seed, "Global seed (overrides config)");
    cmd->add_option("--out", args.out_dir,
                    "Output directory (overrides PEMSBENCH_OUT and config)");
    cmd->add_option("--format", args.format,
                    "Report format: csv, json or both")
        ->check(CLI::IsMember({"csv", "json", "both"}));
}

// Precedence: flag > environment > config file > default.
KvConfig resolve_config(const CommonArgs& args) {
    KvConfig cfg;
    if (!args.config_path.empty()) {
        cfg = KvConfig::from_file(args.config_path);
    }
    if (const char* env = std::getenv("PEMSBENCH_OUT")) {
        if (args.out_dir.empty() && env[0] != '\0') cfg.set("out", env);
    }
    if (!args.out_dir.empty()) cfg.set("out", args.out_dir);
    if (args.seed) cfg.set_int("seed", *args.seed);
    if (!args.format.empty()) cfg.set("format", args.format);
    return cfg;
}

fs::path ensure_out_dir(const KvConfig& cfg) {
    const fs::path dir = cfg.get_string("out", "out");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw DataError("cannot create output directory \"" + dir.string() +
                        "\"");
    }
    return dir;
}

void write_provenance(const KvConfig& resolved, const fs::path& dir,
                      const std::string& name) {
    KvConfig out = resolved;
    out.set("tool_version", kVersion);
    out.save((dir / (name + ".provenance")).string());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write \"" + path.string() + "\"");
    out << text;
}

SynthConfig synth_from_config(const KvConfig& cfg) {
    SynthConfig sc;
    sc.n_rows = cfg.get_int("synth.n_rows", sc.n_rows);
    sc.n_features = static_cast<int>(cfg.get_int("synth.n_features",
                                                 sc.n_features));
    sc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    sc.noise_std = cfg.get_double("synth.noise_std", sc.noise_std);
    sc.missing_rate = cfg.get_double("synth.missing_rate", sc.missing_rate);
    sc.negative_target_rate =
        cfg.get_double("synth.negative_target_rate", sc.negative_target_rate);
    sc.liquid_fuel_rate =
        cfg.get_double("synth.liquid_fuel_rate", sc.liquid_fuel_rate);
    sc.outlier_rate = cfg.get_double("synth.outlier_rate", sc.outlier_rate);
    sc.profile = cfg.get_string("synth.profile", sc.profile);
    return sc;
}

// Echo the values a run actually used back into the config (so provenance
// carries defaults too).
void echo_synth(KvConfig& cfg, const SynthConfig& sc) {
    cfg.set_int("synth.n_rows", sc.n_rows);
    cfg.set_int("synth.n_features", sc.n_features);
    cfg.set_int("seed", static_cast<std::int64_t>(sc.seed));
    cfg.set_double("synth.noise_std", sc.noise_std);
    cfg.set_double("synth.missing_rate", sc.missing_rate);
    cfg.set_double("synth.negative_target_rate", sc.negative_target_rate);
    cfg.set_double("synth.liquid_fuel_rate", sc.liquid_fuel_rate);
    cfg.set_double("synth.outlier_rate", sc.outlier_rate);
    cfg.set("synth.profile", sc.profile);
}

PreprocessConfig preprocess_from_config(const KvConfig& cfg) {
    PreprocessConfig pc;
    const std::string profile = cfg.get_string("preprocess.profile", "full");
    pc.sparse_feature_threshold = PreprocessConfig::profile_threshold(profile);
    pc.sparse_feature_threshold = cfg.get_int("preprocess.sparse_threshold",
                                              pc.sparse_feature_threshold);
    pc.sparse_auto = cfg.get_bool("preprocess.sparse_auto", false);
    pc.target_columns = cfg.get_list("preprocess.targets", {"NOx", "CO"});
    const std::string flag =
        cfg.get_string("preprocess.liquid_fuel_column", "liquid_fuel_flag");
    if (!flag.empty() && flag != "none") pc.liquid_fuel_flag_column = flag;
    pc.liquid_fuel_drop_value =
        cfg.get_double("preprocess.liquid_fuel_value", 1.0);
    pc.protected_columns = cfg.get_list("preprocess.protected", {});
    return pc;
}

void echo_preprocess(KvConfig& cfg, const PreprocessConfig& pc) {
    cfg.set("preprocess.profile",
            cfg.get_string("preprocess.profile", "full"));
    cfg.set_int("preprocess.sparse_threshold", pc.sparse_feature_threshold);
    cfg.set_bool("preprocess.sparse_auto", pc.sparse_auto);
    std::string targets;
    for (const auto& t : pc.target_columns) {
        if (!targets.empty()) targets += ",";
        targets += t;
    }
    cfg.set("preprocess.targets", targets);
    cfg.set("preprocess.liquid_fuel_column",
            pc.liquid_fuel_flag_column ? *pc.liquid_fuel_flag_column : "none");
    cfg.set_double("preprocess.liquid_fuel_value", pc.liquid_fuel_drop_value);
}

BenchConfig bench_from_config(const KvConfig& cfg) {
    BenchConfig bc;
    bc.targets = cfg.get_list("bench.targets", bc.targets);
    bc.models = cfg.get_list("bench.models", bc.models);
    bc.plan.n_repeats =
        static_cast<int>(cfg.get_int("bench.n_repeats", bc.plan.n_repeats));
    bc.plan.test_fraction =
        cfg.get_double("bench.test_fraction", bc.plan.test_fraction);
    bc.plan.base_seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    bc.baseline_mode = cfg.get_string("bench.baseline_mode", bc.baseline_mode);
    bc.baseline_column_prefix =
        cfg.get_string("bench.baseline_column_prefix",
                       bc.baseline_column_prefix);
    bc.excluded_features = cfg.get_list("bench.excluded_features", {});
    bc.threads = static_cast<int>(cfg.get_int("bench.threads", 0));

    bc.gbdt.n_rounds =
        static_cast<int>(cfg.get_int("gbdt.n_rounds", bc.gbdt.n_rounds));
    bc.gbdt.learning_rate =
        cfg.get_double("gbdt.learning_rate", bc.gbdt.learning_rate);
    bc.gbdt.max_depth =
        static_cast<int>(cfg.get_int("gbdt.max_depth", bc.gbdt.max_depth));
    bc.gbdt.lambda = cfg.get_double("gbdt.lambda", bc.gbdt.lambda);
    bc.gbdt.gamma = cfg.get_double("gbdt.gamma", bc.gbdt.gamma);
    bc.gbdt.min_child_weight =
        cfg.get_double("gbdt.min_child_weight", bc.gbdt.min_child_weight);
    if (cfg.has("gbdt.base_score")) {
        bc.gbdt.base_score = cfg.get_double("gbdt.base_score", 0.0);
    }

    bc.saint.d_model =
        static_cast<int>(cfg.get_int("saint.d_model", bc.saint.d_model));
    bc.saint.n_heads =
        static_cast<int>(cfg.get_int("saint.n_heads", bc.saint.n_heads));
    bc.saint.n_layers =
        static_cast<int>(cfg.get_int("saint.n_layers", bc.saint.n_layers));
    bc.saint.batch_size =
        static_cast<int>(cfg.get_int("saint.batch_size", bc.saint.batch_size));
    bc.saint.ff_hidden =
        static_cast<int>(cfg.get_int("saint.ff_hidden", bc.saint.ff_hidden));
    bc.saint.head_hidden = static_cast<int>(
        cfg.get_int("saint.head_hidden", bc.saint.head_hidden));
    bc.saint.learning_rate =
        cfg.get_double("saint.learning_rate", bc.saint.learning_rate);
    bc.saint.weight_decay =
        cfg.get_double("saint.weight_decay", bc.saint.weight_decay);
    bc.saint.dropout = cfg.get_double("saint.dropout", bc.saint.dropout);
    bc.saint.train_epochs = static_cast<int>(
        cfg.get_int("saint.train_epochs", bc.saint.train_epochs));
    if (cfg.has("saint.train_steps")) {
        bc.saint.train_steps = cfg.get_int("saint.train_steps", 0);
    }
    bc.saint.seed = bc.plan.base_seed;
    return bc;
}

void echo_bench(KvConfig& cfg, const BenchConfig& bc) {
    const auto join = [](const std::vector<std::string>& parts) {
        std::string s;
        for (const auto& p : parts) {
            if (!s.empty()) s += ",";
            s += p;
        }
        return s;
    };
    cfg.set("bench.targets", join(bc.targets));
    cfg.set("bench.models", join(bc.models));
    cfg.set_int("bench.n_repeats", bc.plan.n_repeats);
    cfg.set_double("bench.test_fraction", bc.plan.test_fraction);
    cfg.set_int("seed", static_cast<std::int64_t>(bc.plan.base_seed));
    cfg.set("bench.baseline_mode", bc.baseline_mode);
    cfg.set("bench.baseline_column_prefix", bc.baseline_column_prefix);
    cfg.set("bench.excluded_features", join(bc.excluded_features));
    cfg.set_int("bench.threads", bc.threads);
    cfg.set_int("gbdt.n_rounds", bc.gbdt.n_rounds);
    cfg.set_double("gbdt.learning_rate", bc.gbdt.learning_rate);
    cfg.set_int("gbdt.max_depth", bc.gbdt.max_depth);
    cfg.set_double("gbdt.lambda", bc.gbdt.lambda);
    cfg.set_double("gbdt.gamma", bc.gbdt.gamma);
    cfg.set_double("gbdt.min_child_weight", bc.gbdt.min_child_weight);
    if (bc.gbdt.base_score) {
        cfg.set_double("gbdt.base_score", *bc.gbdt.base_score);
    }
    cfg.set_int("saint.d_model", bc.saint.d_model);
    cfg.set_int("saint.n_heads", bc.saint.n_heads);
    cfg.set_int("saint.n_layers", bc.saint.n_layers);
    cfg.set_int("saint.batch_size", bc.saint.batch_size);
    cfg.set_int("saint.ff_hidden", bc.saint.ff_hidden);
    cfg.set_int("saint.head_hidden", bc.saint.head_hidden);
    cfg.set_double("saint.learning_rate", bc.saint.learning_rate);
    cfg.set_double("saint.weight_decay", bc.saint.weight_decay);
    cfg.set_double("saint.dropout", bc.saint.dropout);
    cfg.set_int("saint.train_epochs", bc.saint.train_epochs);
    if (bc.saint.train_steps) {
        cfg.set_int("saint.train_steps", *bc.saint.train_steps);
    }
}

int cmd_synth(const CommonArgs& common) {
    KvConfig cfg = resolve_config(common);
    const SynthConfig sc = synth_from_config(cfg);
    sc.validate();
    const fs::path dir = ensure_out_dir(cfg);

    auto [table, truth] = generate(sc);
    save_csv(table, (dir / "synth.csv").string());
    save_ground_truth_csv(truth, (dir / "synth_truth.csv").string());
    echo_synth(cfg, sc);
    write_provenance(cfg, dir, "synth");
    std::cout << "wrote " << (dir / "synth.csv").string() << " ("
              << table.n_rows() << " rows, " << table.n_cols()
              << " columns)\n";
    return 0;
}

int cmd_preprocess(const CommonArgs& common, const std::string& input) {
    KvConfig cfg = resolve_config(common);
    const PreprocessConfig pc = preprocess_from_config(cfg);
    const fs::path dir = ensure_out_dir(cfg);

    const Table raw = load_csv(input);
    auto [cleaned, report] = run_pipeline(raw, pc);
    save_csv(cleaned, (dir / "cleaned.csv").string());
    write_text(dir / "pipeline_report.csv", report.to_csv());
    echo_preprocess(cfg, pc);
    cfg.set("input", input);
    write_provenance(cfg, dir, "preprocess");
    std::cout << report.to_text();
    return 0;
}

void emit_reports(const EvalReport& report, const fs::path& dir,
                  const std::string& stem, const std::string& format) {
    if (format == "csv" || format == "both") {
        report_emit(report, (dir / (stem + ".csv")).string(),
                    ReportFormat::csv);
    }
    if (format == "json" || format == "both") {
        report_emit(report, (dir / (stem + ".json")).string(),
                    ReportFormat::json);
    }
}

int cmd_bench(const CommonArgs& common, const std::string& input) {
    KvConfig cfg = resolve_config(common);
    const PreprocessConfig pc = preprocess_from_config(cfg);
    BenchConfig bc = bench_from_config(cfg);
    bc.validate();
    const fs::path dir = ensure_out_dir(cfg);
    const std::string format = cfg.get_string("format", "both");

    const Table raw = load_csv(input);
    auto [cleaned, report] = run_pipeline(raw, pc);
    write_text(dir / "pipeline_report.csv", report.to_csv());

    const EvalReport result = run_benchmark(cleaned, bc);
    emit_reports(result, dir, "report", format);
    echo_preprocess(cfg, pc);
    echo_bench(cfg, bc);
    cfg.set("input", input);
    write_provenance(cfg, dir, "bench");

    for (const auto& row : result.rows) {
        if (row.metric != "MAE") continue;
        std::cout << row.target << " " << row.model << " MAE " << row.mean
                  << " +- " << row.stddev << "\n";
    }
    return 0;
}

int cmd_ablate(const CommonArgs& common, const std::string& input,
               std::vector<int> feature_counts) {
    KvConfig cfg = resolve_config(common);
    const PreprocessConfig pc = preprocess_from_config(cfg);
    BenchConfig bc = bench_from_config(cfg);
    bc.validate();
    if (feature_counts.empty()) {
        feature_counts = cfg.get_int_list("ablate.feature_counts", {});
    }
    if (feature_counts.empty()) {
        throw ConfigError("ablate: no feature_counts given (flag "
                          "--feature-counts or config ablate.feature_counts)");
    }
    for (size_t i = 0; i + 1 < feature_counts.size(); ++i) {
        if (feature_counts[i] <= feature_counts[i + 1]) {
            throw ConfigError("feature_counts must be descending");
        }
    }
    const fs::path dir = ensure_out_dir(cfg);
    const std::string format = cfg.get_string("format", "both");

    const Table raw = load_csv(input);
    auto [base, report] = run_pipeline_pre_missing(raw, pc);
    const EvalReport result = ablation_sweep(base, bc, feature_counts);
    emit_reports(result, dir, "ablation_report", format);

    // Companion summary, one line per (k, model, target): plot-ready MAE
    // against feature count with the surviving row counts.
    std::ostringstream summary;
    summary << "n_features,n_rows_used,model,target,mean_mae\n";
    for (const auto& row : result.rows) {
        if (row.metric != "MAE") continue;
        summary << row.n_features << ',' << row.n_rows << ',' << row.model
                << ',' << row.target << ',' << row.mean << '\n';
    }
    write_text(dir / "ablation_summary.csv", summary.str());

    echo_preprocess(cfg, pc);
    echo_bench(cfg, bc);
    {
        std::string s;
        for (int k : feature_counts) {
            if (!s.empty()) s += ",";
            s += std::to_string(k);
        }
        cfg.set("ablate.feature_counts", s);
    }
    cfg.set("input", input);
    write_provenance(cfg, dir, "ablate");
    std::cout << summary.str();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pemsbench: emissions-prediction benchmark engine"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonArgs synth_args, pre_args, bench_args, ablate_args;
    std::string pre_input, bench_input, ablate_input;
    std::vector<int> ablate_counts;

    CLI::App* synth = app.add_subcommand("synth",
                                         "Generate synthetic test-bed data");
    add_common_flags(synth, synth_args);

    CLI::App* pre = app.add_subcommand("preprocess",
                                       "Run the filter pipeline on a CSV");
    add_common_flags(pre, pre_args);
    pre->add_option("--input", pre_input, "Input CSV")->required();

    CLI::App* bench = app.add_subcommand(
        "bench", "Cross-validated model comparison (preprocesses its input)");
    add_common_flags(bench, bench_args);
    bench->add_option("--input", bench_input, "Input CSV")->required();

    CLI::App* ablate = app.add_subcommand(
        "ablate", "Importance-ordered feature ablation sweep");
    add_common_flags(ablate, ablate_args);
    ablate->add_option("--input", ablate_input, "Input CSV")->required();
    ablate->add_option("--feature-counts", ablate_counts,
                       "Descending feature counts (comma separated)")
        ->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help/--version
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_args);
        if (pre->parsed()) return cmd_preprocess(pre_args, pre_input);
        if (bench->parsed()) return cmd_bench(bench_args, bench_input);
        if (ablate->parsed()) {
            return cmd_ablate(ablate_args, ablate_input, ablate_counts);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
