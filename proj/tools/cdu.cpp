// Command-line front end. Exit codes: 0 ok, 2 config error, 3 data error,
// 4 numeric failure.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cdu/artifact.hpp"
#include "cdu/harness.hpp"
#include "cdu/report.hpp"
#include "cdu/streams.hpp"

namespace {

using namespace cdu;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

ScenarioConfig config_or_default(const std::string& path) {
    return path.empty() ? ScenarioConfig{} : load_scenario_config(path);
}

bool csv_has_label_column(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string header;
    std::getline(in, header);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    const auto comma = header.rfind(',');
    return header.substr(comma == std::string::npos ? 0 : comma + 1) == "label";
}

Dataset load_any_csv(const std::string& path) { return load_csv(path, csv_has_label_column(path)); }

// AE training rows for a data source: "digits", "synth" or a CSV path.
Matrix training_rows(const std::string& src, const ScenarioConfig& cfg) {
    if (src == "digits") return load_digits().features;
    if (src == "synth") {
        const auto ds = synth_network_stream(cfg.data.synth, derive_seed(cfg.seed, "stream"));
        const auto n = static_cast<Eigen::Index>(
            std::floor(cfg.windows.train_fraction * static_cast<double>(cfg.windows.onset)));
        if (n < 1 || n > ds.size()) throw ConfigError("windows select no training rows from the synthetic stream");
        return ds.features.topRows(n);
    }
    return load_any_csv(src).features;
}

int cmd_train_ae(const std::string& data, const std::string& config, const std::string& out) {
    const auto cfg = config_or_default(config);
    const Matrix x = training_rows(data, cfg);
    auto fit = train_autoencoder_detailed(x, cfg.ae, derive_seed(cfg.seed, "ae"));
    Artifact a;
    a.autoencoder = fit.model;
    save_artifact(out, a);
    std::cout << "autoencoder " << fit.model.input_dim() << " -> " << fit.model.latent_dim() << ", " << fit.epochs_run
              << " epochs, loss " << fit.initial_loss << " -> " << fit.final_loss << "\n";
    return 0;
}

int cmd_fit_unlearner(const std::string& ae_dir, const std::string& data, std::optional<double> c,
                      const std::string& config, const std::string& out) {
    auto cfg = config_or_default(config);
    if (c) cfg.unlearn.regularization = *c;
    cfg.validate();
    Artifact a = load_artifact(ae_dir);
    if (!a.autoencoder) throw DataError(ae_dir + " holds no autoencoder");
    const Dataset dstar = load_any_csv(data);
    auto fit = fit_unlearner_detailed(*a.autoencoder, dstar.features, cfg.unlearn, derive_seed(cfg.seed, "unlearn"));
    a.unlearner = fit.map;
    save_artifact(out, a);
    std::cout << "unlearner fitted on " << dstar.size() << " rows, C " << cfg.unlearn.regularization << ", objective "
              << fit.initial_objective << " -> " << fit.final_objective << " in " << fit.epochs_run << " epochs\n";
    return 0;
}

int cmd_apply(const std::string& dir, const std::string& in, const std::string& out) {
    const Artifact a = load_artifact(dir);
    if (!a.unlearner) throw DataError(dir + " holds no unlearner");
    Dataset ds = load_any_csv(in);
    if (ds.dim() != a.unlearner->dim()) {
        throw DataError(in + " has " + std::to_string(ds.dim()) + " features, the unlearner expects " +
                        std::to_string(a.unlearner->dim()));
    }
    ds.features = apply_unlearner(*a.unlearner, ds.features);
    save_csv(out, ds);
    return 0;
}

int cmd_run_scenario(const std::string& config, const std::string& out) {
    auto cfg = load_scenario_config(config);
    if (!out.empty()) cfg.output_dir = out;
    if (cfg.output_dir.empty()) throw ConfigError("no output directory: pass --out or set output_dir");
    const auto report = run_scenario(cfg);
    write_report(report, cfg.output_dir);
    std::cout << format_table(report);
    return 0;
}

int cmd_run_suite(const std::string& config, std::size_t n, Seed seed, std::optional<std::size_t> threads,
                  const std::string& out) {
    auto cfg = load_scenario_config(config);
    if (!out.empty()) cfg.output_dir = out;
    if (threads) cfg.threads = *threads;
    if (cfg.output_dir.empty()) throw ConfigError("no output directory: pass --out or set output_dir");
    const auto suite = run_suite(cfg, n, seed, [n](std::size_t i, const ScenarioReport& r) {
        std::cerr << "scenario " << i + 1 << "/" << n << (improved(r) ? " kept" : " filtered") << "\n";
    });
    write_report(suite, cfg.output_dir);
    std::cout << format_table(suite);
    return 0;
}

int cmd_report(const std::string& in, const std::string& format) {
    const auto report = load_report(in);
    std::cout << (format == "csv" ? format_csv(report) : format_table(report));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept drift unlearning: autoencoder-guided input correction"};
    app.require_subcommand(1);

    std::string data, config, out, ae_dir, in, format = "table";
    std::optional<double> c;
    std::optional<std::size_t> threads;
    std::size_t count = 0;
    Seed seed = 0;

    auto* train = app.add_subcommand("train-ae", "Train and freeze an autoencoder");
    train->add_option("--data", data, "digits, synth, or a CSV path")->required();
    train->add_option("--config", config, "Scenario config (JSON)");
    train->add_option("--out", out, "Artifact directory")->required();

    auto* fit = app.add_subcommand("fit-unlearner", "Fit the corrective map on a post-drift window");
    fit->add_option("--ae", ae_dir, "Autoencoder artifact directory")->required();
    fit->add_option("--data", data, "Post-drift CSV (D*)")->required();
    fit->add_option("--c", c, "L1 regularization strength");
    fit->add_option("--config", config, "Scenario config (JSON) for the remaining settings");
    fit->add_option("--out", out, "Artifact directory")->required();

    auto* apply = app.add_subcommand("apply", "Apply a fitted map to a CSV");
    apply->add_option("--unlearner", ae_dir, "Unlearner artifact directory")->required();
    apply->add_option("--in", in, "Input CSV")->required();
    apply->add_option("--out", out, "Output CSV")->required();

    auto* scenario = app.add_subcommand("run-scenario", "Run one scenario and write its report");
    scenario->add_option("--config", config, "Scenario config (JSON)")->required();
    scenario->add_option("--out", out, "Report directory");

    auto* suite = app.add_subcommand("run-suite", "Run a suite of sampled sensor-fault scenarios");
    suite->add_option("--config", config, "Base scenario config (JSON)")->required();
    suite->add_option("-n", count, "Number of scenarios")->required()->check(CLI::PositiveNumber);
    suite->add_option("--seed", seed, "Suite seed")->required();
    suite->add_option("--threads", threads, "Worker threads (0: all cores)");
    suite->add_option("--out", out, "Report directory");

    auto* report = app.add_subcommand("report", "Print a stored report");
    report->add_option("--in", in, "Report directory")->required();
    report->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "table"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*train) return cmd_train_ae(data, config, out);
        if (*fit) return cmd_fit_unlearner(ae_dir, data, c, config, out);
        if (*apply) return cmd_apply(ae_dir, in, out);
        if (*scenario) return cmd_run_scenario(config, out);
        if (*suite) return cmd_run_suite(config, count, seed, threads, out);
        if (*report) return cmd_report(in, format);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const SingularityError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DegenerateMetricError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
