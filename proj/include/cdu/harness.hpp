#pragma once

// Scenario orchestration. One scenario trains the autoencoder and the
// downstream models on a drift-free window, injects a drift, fits the
// corrective map on the first post-onset window (D*) and scores every
// downstream task under four conditions on the same post-drift window:
//
//   before       clean evaluation window
//   after_drift  drifted evaluation window
//   ae_baseline  autoencoder reconstruction of the drifted window
//   unlearned    f applied to the drifted window
//
// Digits scenarios use k-fold cross validation instead of a time split: each
// fold trains on the clean training rows and uses its drifted test rows as D*.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdu/autoencoder.hpp"
#include "cdu/downstream.hpp"
#include "cdu/streams.hpp"
#include "cdu/unlearner.hpp"

namespace cdu {

enum class DataSource { Digits, Synth, Csv };
enum class DriftKind { None, Digits, Fault, Sampled };

std::string to_string(DataSource s);
DataSource data_source_from_string(const std::string& name);
std::string to_string(DriftKind k);
DriftKind drift_kind_from_string(const std::string& name);

struct DatasetConfig {
    DataSource source = DataSource::Synth;
    std::string path;         // csv only
    bool has_labels = false;  // csv only; labelled streams get a classifier task
    SynthNetConfig synth;
};

struct DriftConfig {
    DriftKind kind = DriftKind::Sampled;
    FaultSpec fault;  // kind == Fault; its onset is taken from the windows
};

/// Stream layout: [0, train) AE + downstream training, [train, onset) clean
/// evaluation, [onset, onset + dstar) D*, then the post-drift evaluation window.
struct WindowConfig {
    Eigen::Index onset = 2000;
    double train_fraction = 0.6;  // of the pre-drift rows
    Eigen::Index dstar = 200;
    Eigen::Index post_eval = 0;  // 0 takes the rest of the stream
    Eigen::Index folds = 10;     // digits only
};

struct ScenarioConfig {
    DatasetConfig data;
    DriftConfig drift;
    WindowConfig windows;
    AEConfig ae;
    UnlearnConfig unlearn;
    LogisticConfig logistic;
    Seed seed = 0;
    std::size_t threads = 1;  // suite runner; 0 uses every hardware thread
    std::string output_dir;

    /// Static checks only; windows are checked against the data in run_scenario.
    void validate() const;
};

using Json = nlohmann::json;

Json to_json(const ScenarioConfig& cfg);
/// Every key is optional; unknown keys and wrong types throw ConfigError.
ScenarioConfig scenario_config_from_json(const Json& j);
ScenarioConfig load_scenario_config(const std::filesystem::path& path);

/// Independent stream for a named sub-task of a seeded run.
Seed derive_seed(Seed seed, const std::string& tag, std::uint64_t index = 0);

struct Conditions {
    double before = 0.0;
    double after_drift = 0.0;
    double ae_baseline = 0.0;
    double unlearned = 0.0;
};

inline constexpr const char* kConditionNames[4] = {"before", "after_drift", "ae_baseline", "unlearned"};
double condition_value(const Conditions& c, std::size_t i);
double& condition_value(Conditions& c, std::size_t i);

struct TaskResult {
    std::string id;
    bool degenerate = false;  // some condition has a constant target; NaN entries
    std::string reason;
    Conditions mean;
    Conditions variance;  // across folds, 0 for a single window
    std::vector<Conditions> folds;
};

/// Parameter hashes taken at the moment a condition was scored.
struct HashRecord {
    std::string condition;
    std::uint64_t autoencoder = 0;
    std::uint64_t downstream = 0;
};

struct UnitRecord {
    std::size_t unit = 0;  // fold index, 0 for time-split streams
    std::vector<HashRecord> hashes;
    double loss_pre = 0.0;        // clean evaluation window
    double loss_post = 0.0;       // drifted evaluation window
    double loss_unlearned = 0.0;  // f(drifted evaluation window)
    double unlearn_shift = 0.0;   // mean |f(x) - x|_1 / d on D*, standardized
    double objective_initial = 0.0;
    double objective_final = 0.0;
    std::size_t unlearn_epochs = 0;
    std::size_t ae_epochs = 0;
};

struct Runtimes {
    double total = 0.0;
    double autoencoder = 0.0;
    double unlearner = 0.0;
};

struct ScenarioReport {
    ScenarioConfig config;
    std::optional<FaultSpec> fault;  // resolved fault, when one was injected
    std::vector<TaskResult> tasks;
    std::vector<UnitRecord> units;
    double loss_pre = 0.0;  // means over units
    double loss_post = 0.0;
    double loss_unlearned = 0.0;
    double loss_ratio = 0.0;  // post / pre
    double unlearn_shift = 0.0;
    std::vector<std::string> warnings;
    Runtimes runtimes;
};

inline constexpr double kLossRatioWarning = 2.0;

ScenarioReport run_scenario(const ScenarioConfig& cfg);

/// Keep rule: the corrected drifted window reconstructs better than the drifted one.
bool improved(const ScenarioReport& r);
/// All recorded autoencoder and downstream hashes agree within every unit.
bool protocol_intact(const ScenarioReport& r);

struct TaskSummary {
    std::string id;
    std::size_t count = 0;  // kept scenarios where the task is not degenerate
    Conditions median;
    Conditions variance;
};

struct SuiteReport {
    ScenarioConfig base;
    std::size_t num_scenarios = 0;
    Seed seed = 0;
    std::vector<ScenarioReport> scenarios;  // ordered by scenario index
    std::size_t kept = 0;
    std::size_t filtered = 0;
    std::vector<TaskSummary> tasks;
    std::vector<std::string> warnings;
};

/// Config of scenario `index`: base with a derived seed and a sampled fault.
ScenarioConfig suite_scenario_config(const ScenarioConfig& base, Seed seed, std::size_t index);

/// Applies the keep rule and reduces the kept, non-degenerate task results.
SuiteReport summarize_suite(const ScenarioConfig& base, Seed seed, std::vector<ScenarioReport> scenarios);

using SuiteProgress = std::function<void(std::size_t index, const ScenarioReport&)>;

SuiteReport run_suite(const ScenarioConfig& base, std::size_t num_scenarios, Seed seed,
                      const SuiteProgress& progress = {});

double median(std::vector<double> values);
/// Sample variance; 0 for fewer than two values.
double variance(const std::vector<double>& values);

}  // namespace cdu
