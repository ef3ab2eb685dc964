#include "cdu/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>
#include <type_traits>

namespace cdu {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---- config parsing -------------------------------------------------------

[[noreturn]] void config_fail(const std::string& where, const std::string& msg) {
    throw ConfigError(where + ": " + msg);
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) config_fail(where, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; });
        if (!known) config_fail(where, "unknown key '" + it.key() + "'");
    }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    const std::string at = where + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) config_fail(at, "expected a boolean");
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned()) config_fail(at, "expected a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) config_fail(at, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) config_fail(at, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) config_fail(at, "expected a string");
    }
    try {
        out = it->get<T>();
    } catch (const Json::exception& e) {
        config_fail(at, e.what());
    }
}

template <class E, class Parse>
void read_enum(const Json& j, const char* key, E& out, const std::string& where, Parse parse) {
    std::string name;
    if (!j.contains(key)) return;
    read(j, key, name, where);
    try {
        out = parse(name);
    } catch (const Error& e) {
        config_fail(where + "." + key, e.what());
    }
}

void read_adam(const Json& j, AdamConfig& a, const std::string& where) {
    check_keys(j, {"learning_rate", "beta1", "beta2", "epsilon"}, where);
    read(j, "learning_rate", a.learning_rate, where);
    read(j, "beta1", a.beta1, where);
    read(j, "beta2", a.beta2, where);
    read(j, "epsilon", a.epsilon, where);
}

Json adam_json(const AdamConfig& a) {
    return {{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

void read_ae(const Json& j, AEConfig& c, const std::string& where) {
    check_keys(j,
               {"hidden", "hidden_activation", "standardize", "scale_floor", "batch_size", "max_epochs", "patience", "min_improvement",
                "min_samples", "adam"},
               where);
    if (j.contains("hidden")) {
        const auto& h = j["hidden"];
        if (!h.is_array()) config_fail(where + ".hidden", "expected an array of widths");
        c.hidden.clear();
        for (const auto& w : h) {
            if (!w.is_number_unsigned() || w.get<Eigen::Index>() < 1) {
                config_fail(where + ".hidden", "widths must be positive integers");
            }
            c.hidden.push_back(w.get<Eigen::Index>());
        }
    }
    read_enum(j, "hidden_activation", c.hidden_activation, where, activation_from_string);
    read(j, "standardize", c.standardize, where);
    read(j, "scale_floor", c.scale_floor, where);
    read(j, "batch_size", c.batch_size, where);
    read(j, "max_epochs", c.max_epochs, where);
    read(j, "patience", c.patience, where);
    read(j, "min_improvement", c.min_improvement, where);
    read(j, "min_samples", c.min_samples, where);
    if (j.contains("adam")) read_adam(j["adam"], c.adam, where + ".adam");
}

void read_unlearn(const Json& j, UnlearnConfig& c, const std::string& where) {
    check_keys(j,
               {"kind", "regularization", "batch_size", "max_epochs", "patience", "min_improvement", "min_samples",
                "mlp_hidden", "adam"},
               where);
    read_enum(j, "kind", c.kind, where, map_kind_from_string);
    read(j, "regularization", c.regularization, where);
    read(j, "batch_size", c.batch_size, where);
    read(j, "max_epochs", c.max_epochs, where);
    read(j, "patience", c.patience, where);
    read(j, "min_improvement", c.min_improvement, where);
    read(j, "min_samples", c.min_samples, where);
    read(j, "mlp_hidden", c.mlp_hidden, where);
    if (j.contains("adam")) read_adam(j["adam"], c.adam, where + ".adam");
}

void read_logistic(const Json& j, LogisticConfig& c, const std::string& where) {
    check_keys(j, {"l2", "epochs", "batch_size", "adam"}, where);
    read(j, "l2", c.l2, where);
    read(j, "epochs", c.epochs, where);
    read(j, "batch_size", c.batch_size, where);
    if (j.contains("adam")) read_adam(j["adam"], c.adam, where + ".adam");
}

void read_synth(const Json& j, SynthNetConfig& c, const std::string& where) {
    check_keys(j,
               {"sensors", "factors", "samples", "mixing_seed", "daily_amplitude", "samples_per_day", "noise",
                "base_level", "persistence", "smoothing"},
               where);
    read(j, "sensors", c.sensors, where);
    read(j, "factors", c.factors, where);
    read(j, "samples", c.samples, where);
    read(j, "mixing_seed", c.mixing_seed, where);
    read(j, "daily_amplitude", c.daily_amplitude, where);
    read(j, "samples_per_day", c.samples_per_day, where);
    read(j, "noise", c.noise, where);
    read(j, "base_level", c.base_level, where);
    read(j, "persistence", c.persistence, where);
    read(j, "smoothing", c.smoothing, where);
}

// ---- seeds and statistics -------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return kNaN;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

Vector population_sd(const Matrix& x) {
    const Eigen::RowVectorXd mu = x.colwise().mean();
    return (x.rowwise() - mu).array().square().colwise().mean().sqrt().transpose();
}

std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
    return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

// ---- downstream tasks -----------------------------------------------------

struct TaskSet {
    std::optional<LogisticModel> classifier;
    std::vector<VirtualSensorModel> sensors;
    std::vector<std::string> ids;

    std::uint64_t hash() const {
        std::uint64_t h = 0;
        if (classifier) h = combine(h, classifier->param_hash());
        for (const auto& s : sensors) h = combine(h, s.param_hash());
        return h;
    }
};

// One score per task; NaN plus a reason where the metric is undefined.
std::vector<double> score(const TaskSet& tasks, const Matrix& input, const Matrix& observed,
                          const std::optional<std::vector<int>>& labels, std::vector<std::string>& reasons,
                          const char* condition) {
    std::vector<double> out;
    if (tasks.classifier) {
        out.push_back(accuracy(*tasks.classifier, input, *labels));
        return out;
    }
    for (std::size_t t = 0; t < tasks.sensors.size(); ++t) {
        const auto& vs = tasks.sensors[t];
        try {
            out.push_back(r2_score(observed.col(vs.target), predict_sensor(vs, input)));
        } catch (const DegenerateMetricError& e) {
            out.push_back(kNaN);
            if (reasons[t].empty()) reasons[t] = std::string(condition) + ": " + e.what();
        }
    }
    return out;
}

struct UnitInput {
    std::size_t unit = 0;
    Matrix train;
    std::optional<std::vector<int>> train_labels;
    Matrix clean_eval;
    std::optional<std::vector<int>> clean_labels;
    Matrix drift_eval;
    std::optional<std::vector<int>> eval_labels;
    Matrix dstar;
    std::vector<std::string> names;
};

struct UnitOutput {
    UnitRecord record;
    std::vector<std::string> ids;
    std::vector<Conditions> scores;
    std::vector<std::string> reasons;
};

UnitOutput run_unit(const ScenarioConfig& cfg, const UnitInput& in, Runtimes& rt) {
    UnitOutput out;
    out.record.unit = in.unit;

    auto t0 = Clock::now();
    auto ae_fit = train_autoencoder_detailed(in.train, cfg.ae, derive_seed(cfg.seed, "ae", in.unit));
    const AutoencoderModel& ae = ae_fit.model;
    out.record.ae_epochs = ae_fit.epochs_run;
    rt.autoencoder += seconds_since(t0);

    TaskSet tasks;
    if (in.train_labels) {
        tasks.classifier =
            train_logistic(in.train, *in.train_labels, cfg.logistic, derive_seed(cfg.seed, "logistic", in.unit));
        tasks.ids.push_back("classifier");
    } else {
        for (Eigen::Index k = 0; k < in.train.cols(); ++k) {
            tasks.sensors.push_back(train_virtual_sensor(in.train, k));
            tasks.ids.push_back(in.names.empty() ? "x" + std::to_string(k) : in.names[static_cast<std::size_t>(k)]);
        }
    }
    out.ids = tasks.ids;
    out.reasons.assign(tasks.ids.size(), {});

    auto stamp = [&](const char* condition) {
        out.record.hashes.push_back(HashRecord{condition, ae.param_hash(), tasks.hash()});
    };

    stamp("before");
    const auto before = score(tasks, in.clean_eval, in.clean_eval, in.clean_labels, out.reasons, "before");
    stamp("after_drift");
    const auto after = score(tasks, in.drift_eval, in.drift_eval, in.eval_labels, out.reasons, "after_drift");

    t0 = Clock::now();
    auto fit = fit_unlearner_detailed(ae, in.dstar, cfg.unlearn, derive_seed(cfg.seed, "unlearn", in.unit));
    rt.unlearner += seconds_since(t0);
    out.record.objective_initial = fit.initial_objective;
    out.record.objective_final = fit.final_objective;
    out.record.unlearn_epochs = fit.epochs_run;

    const Matrix recon = reconstruct(ae, in.drift_eval);
    const Matrix corrected = apply_unlearner(fit.map, in.drift_eval);

    stamp("ae_baseline");
    const auto baseline = score(tasks, recon, in.drift_eval, in.eval_labels, out.reasons, "ae_baseline");
    stamp("unlearned");
    const auto unlearned = score(tasks, corrected, in.drift_eval, in.eval_labels, out.reasons, "unlearned");

    for (std::size_t t = 0; t < tasks.ids.size(); ++t) {
        out.scores.push_back(Conditions{before[t], after[t], baseline[t], unlearned[t]});
    }

    out.record.loss_pre = reconstruction_loss(ae, in.clean_eval);
    out.record.loss_post = reconstruction_loss(ae, in.drift_eval);
    out.record.loss_unlearned = reconstruction_loss(ae, corrected);
    const auto& sc = ae.scaler();
    const Matrix shift = sc.transform(apply_unlearner(fit.map, in.dstar)) - sc.transform(in.dstar);
    out.record.unlearn_shift = shift.cwiseAbs().mean();
    return out;
}

void collect(ScenarioReport& r, std::vector<UnitOutput>& units) {
    const auto& ids = units.front().ids;
    for (std::size_t t = 0; t < ids.size(); ++t) {
        TaskResult task;
        task.id = ids[t];
        for (const auto& u : units) {
            task.folds.push_back(u.scores[t]);
            if (task.reason.empty()) task.reason = u.reasons[t];
        }
        for (std::size_t c = 0; c < 4; ++c) {
            std::vector<double> v;
            for (const auto& f : task.folds) v.push_back(condition_value(f, c));
            condition_value(task.mean, c) = mean_of(v);
            condition_value(task.variance, c) = variance(v);
            if (std::isnan(condition_value(task.mean, c))) task.degenerate = true;
        }
        r.tasks.push_back(std::move(task));
    }
    std::vector<double> pre, post, unl, shift;
    for (auto& u : units) {
        pre.push_back(u.record.loss_pre);
        post.push_back(u.record.loss_post);
        unl.push_back(u.record.loss_unlearned);
        shift.push_back(u.record.unlearn_shift);
        r.units.push_back(std::move(u.record));
    }
    r.loss_pre = mean_of(pre);
    r.loss_post = mean_of(post);
    r.loss_unlearned = mean_of(unl);
    r.unlearn_shift = mean_of(shift);
    r.loss_ratio = r.loss_pre > 0.0 ? r.loss_post / r.loss_pre : std::numeric_limits<double>::infinity();
}

void run_digits(const ScenarioConfig& cfg, ScenarioReport& r) {
    const Dataset ds = load_digits();
    const auto folds = kfold_split(ds.size(), cfg.windows.folds, derive_seed(cfg.seed, "folds"));
    std::vector<UnitOutput> units;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const Dataset train = ds.rows(folds[f].train);
        const Dataset test = ds.rows(folds[f].test);
        UnitInput in;
        in.unit = f;
        in.train = train.features;
        in.train_labels = train.labels;
        in.clean_eval = test.features;
        in.drift_eval = cfg.drift.kind == DriftKind::Digits ? digits_drift(test.features) : test.features;
        in.clean_labels = test.labels;
        in.eval_labels = test.labels;
        in.dstar = in.drift_eval;
        units.push_back(run_unit(cfg, in, r.runtimes));
    }
    collect(r, units);
}

void run_stream(const ScenarioConfig& cfg, ScenarioReport& r) {
    Dataset ds;
    if (cfg.data.source == DataSource::Synth) {
        ds = synth_network_stream(cfg.data.synth, derive_seed(cfg.seed, "stream"));
    } else {
        ds = load_csv(cfg.data.path, cfg.data.has_labels);
    }
    const auto& w = cfg.windows;
    const Eigen::Index n = ds.size();
    const auto ntrain = static_cast<Eigen::Index>(std::floor(w.train_fraction * static_cast<double>(w.onset)));
    const Eigen::Index post_begin = w.onset + w.dstar;
    const Eigen::Index post_end = w.post_eval > 0 ? post_begin + w.post_eval : n;
    if (ntrain < 1 || ntrain >= w.onset) {
        throw ConfigError("windows: train_fraction leaves an empty training or clean evaluation window");
    }
    if (post_begin >= n || post_end > n) {
        throw ConfigError("windows: onset " + std::to_string(w.onset) + " + dstar " + std::to_string(w.dstar) +
                          " + post_eval " + std::to_string(w.post_eval) + " exceeds the stream length " +
                          std::to_string(n));
    }

    Matrix drifted = ds.features;
    if (cfg.drift.kind == DriftKind::Sampled || cfg.drift.kind == DriftKind::Fault) {
        FaultSpec spec = cfg.drift.fault;
        if (cfg.drift.kind == DriftKind::Sampled) {
            std::mt19937_64 rng(derive_seed(cfg.seed, "fault"));
            spec = sample_fault_spec(rng, population_sd(ds.features.topRows(ntrain)), w.onset);
        }
        spec.onset = w.onset;
        drifted = inject_fault(ds.features, spec);
        r.fault = spec;
    }

    UnitInput in;
    in.train = ds.features.topRows(ntrain);
    in.clean_eval = ds.features.middleRows(ntrain, w.onset - ntrain);
    in.drift_eval = drifted.middleRows(post_begin, post_end - post_begin);
    in.dstar = drifted.middleRows(w.onset, w.dstar);
    in.names = ds.names;
    if (ds.labels) {
        const auto& y = *ds.labels;
        in.train_labels = std::vector<int>(y.begin(), y.begin() + ntrain);
        in.clean_labels = std::vector<int>(y.begin() + ntrain, y.begin() + w.onset);
        in.eval_labels = std::vector<int>(y.begin() + post_begin, y.begin() + post_end);
    }
    std::vector<UnitOutput> units;
    units.push_back(run_unit(cfg, in, r.runtimes));
    collect(r, units);
}

template <class E>
bool rethrow_as(const std::exception_ptr& p, const std::string& ctx) {
    try {
        std::rethrow_exception(p);
    } catch (const E& e) {
        throw E(ctx + e.what());
    } catch (...) {
        return false;
    }
}

[[noreturn]] void rethrow_with_context(const std::exception_ptr& p, const std::string& ctx) {
    rethrow_as<ConfigError>(p, ctx);
    rethrow_as<DataError>(p, ctx);
    rethrow_as<ShapeError>(p, ctx);
    rethrow_as<ContractError>(p, ctx);
    rethrow_as<DivergenceError>(p, ctx);
    rethrow_as<SingularityError>(p, ctx);
    rethrow_as<DegenerateMetricError>(p, ctx);
    std::rethrow_exception(p);
}

}  // namespace

std::string to_string(DataSource s) {
    switch (s) {
        case DataSource::Digits:
            return "digits";
        case DataSource::Synth:
            return "synth";
        case DataSource::Csv:
            return "csv";
    }
    return "?";
}

DataSource data_source_from_string(const std::string& name) {
    if (name == "digits") return DataSource::Digits;
    if (name == "synth") return DataSource::Synth;
    if (name == "csv") return DataSource::Csv;
    throw ConfigError("unknown data source '" + name + "'");
}

std::string to_string(DriftKind k) {
    switch (k) {
        case DriftKind::None:
            return "none";
        case DriftKind::Digits:
            return "digits";
        case DriftKind::Fault:
            return "fault";
        case DriftKind::Sampled:
            return "sampled";
    }
    return "?";
}

DriftKind drift_kind_from_string(const std::string& name) {
    if (name == "none") return DriftKind::None;
    if (name == "digits") return DriftKind::Digits;
    if (name == "fault") return DriftKind::Fault;
    if (name == "sampled") return DriftKind::Sampled;
    throw ConfigError("unknown drift kind '" + name + "'");
}

void ScenarioConfig::validate() const {
    if (data.source == DataSource::Digits) {
        if (drift.kind != DriftKind::Digits && drift.kind != DriftKind::None) {
            throw ConfigError("digits scenarios support drift kinds 'digits' and 'none' only");
        }
        if (windows.folds < 2) throw ConfigError("windows.folds must be >= 2");
    } else {
        if (drift.kind == DriftKind::Digits) throw ConfigError("drift kind 'digits' needs the digits data source");
        if (data.source == DataSource::Csv && data.path.empty()) throw ConfigError("data.path is required for csv");
        if (data.source == DataSource::Synth) data.synth.validate();
        if (!(windows.train_fraction > 0.0 && windows.train_fraction < 1.0)) {
            throw ConfigError("windows.train_fraction must lie in (0, 1)");
        }
        if (windows.onset < 2) throw ConfigError("windows.onset must be >= 2");
        if (windows.dstar < 1) throw ConfigError("windows.dstar must be positive");
        if (windows.post_eval < 0) throw ConfigError("windows.post_eval must be >= 0");
        if (drift.kind == DriftKind::Fault) {
            const auto& f = drift.fault;
            if (f.target < 0) throw ConfigError("drift.fault.target must be >= 0");
            if (!std::isfinite(f.parameter)) throw ConfigError("drift.fault.parameter must be finite");
            if (f.kind == FaultKind::GaussianNoise && !(f.parameter > 0.0)) {
                throw ConfigError("drift.fault.parameter (noise sigma) must be positive");
            }
            if (f.kind == FaultKind::ProportionalOffset && f.parameter == 1.0) {
                throw ConfigError("drift.fault.parameter (gain) must differ from 1");
            }
        }
    }
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!(std::isfinite(unlearn.regularization) && unlearn.regularization >= 0.0)) {
        throw ConfigError("unlearn.regularization must be finite and >= 0");
    }
    if (!positive(ae.adam.learning_rate) || !positive(unlearn.adam.learning_rate) ||
        !positive(logistic.adam.learning_rate)) {
        throw ConfigError("learning rates must be positive");
    }
    if (ae.batch_size == 0 || unlearn.batch_size == 0 || logistic.batch_size == 0) {
        throw ConfigError("batch sizes must be positive");
    }
    if (!(ae.scale_floor >= 0.0)) throw ConfigError("ae.scale_floor must be >= 0");
    if (!(logistic.l2 >= 0.0)) throw ConfigError("logistic.l2 must be >= 0");
}

Json to_json(const ScenarioConfig& c) {
    const auto& s = c.data.synth;
    Json data{{"source", to_string(c.data.source)},
              {"path", c.data.path},
              {"has_labels", c.data.has_labels},
              {"synth",
               {{"sensors", s.sensors},
                {"factors", s.factors},
                {"samples", s.samples},
                {"mixing_seed", s.mixing_seed},
                {"daily_amplitude", s.daily_amplitude},
                {"samples_per_day", s.samples_per_day},
                {"noise", s.noise},
                {"base_level", s.base_level},
                {"persistence", s.persistence},
                {"smoothing", s.smoothing}}}};
    const auto& f = c.drift.fault;
    Json drift{{"kind", to_string(c.drift.kind)},
               {"fault",
                {{"kind", to_string(f.kind)}, {"target", f.target}, {"parameter", f.parameter}, {"seed", f.seed}}}};
    const auto& w = c.windows;
    Json windows{{"onset", w.onset},
                 {"train_fraction", w.train_fraction},
                 {"dstar", w.dstar},
                 {"post_eval", w.post_eval},
                 {"folds", w.folds}};
    Json ae{{"hidden", c.ae.hidden},
            {"hidden_activation", to_string(c.ae.hidden_activation)},
            {"standardize", c.ae.standardize},
            {"scale_floor", c.ae.scale_floor},
            {"batch_size", c.ae.batch_size},
            {"max_epochs", c.ae.max_epochs},
            {"patience", c.ae.patience},
            {"min_improvement", c.ae.min_improvement},
            {"min_samples", c.ae.min_samples},
            {"adam", adam_json(c.ae.adam)}};
    Json unlearn{{"kind", to_string(c.unlearn.kind)},
                 {"regularization", c.unlearn.regularization},
                 {"batch_size", c.unlearn.batch_size},
                 {"max_epochs", c.unlearn.max_epochs},
                 {"patience", c.unlearn.patience},
                 {"min_improvement", c.unlearn.min_improvement},
                 {"min_samples", c.unlearn.min_samples},
                 {"mlp_hidden", c.unlearn.mlp_hidden},
                 {"adam", adam_json(c.unlearn.adam)}};
    Json logistic{{"l2", c.logistic.l2},
                  {"epochs", c.logistic.epochs},
                  {"batch_size", c.logistic.batch_size},
                  {"adam", adam_json(c.logistic.adam)}};
    return {{"data", data},       {"drift", drift},     {"windows", windows},
            {"ae", ae},           {"unlearn", unlearn}, {"logistic", logistic},
            {"seed", c.seed},     {"threads", c.threads}, {"output_dir", c.output_dir}};
}

ScenarioConfig scenario_config_from_json(const Json& j) {
    ScenarioConfig c;
    const std::string root = "config";
    check_keys(j, {"data", "drift", "windows", "ae", "unlearn", "logistic", "seed", "threads", "output_dir"}, root);
    if (j.contains("data")) {
        const auto& d = j["data"];
        const std::string where = root + ".data";
        check_keys(d, {"source", "path", "has_labels", "synth"}, where);
        read_enum(d, "source", c.data.source, where, data_source_from_string);
        read(d, "path", c.data.path, where);
        read(d, "has_labels", c.data.has_labels, where);
        if (d.contains("synth")) read_synth(d["synth"], c.data.synth, where + ".synth");
    }
    if (j.contains("drift")) {
        const auto& d = j["drift"];
        const std::string where = root + ".drift";
        check_keys(d, {"kind", "fault"}, where);
        read_enum(d, "kind", c.drift.kind, where, drift_kind_from_string);
        if (d.contains("fault")) {
            const auto& f = d["fault"];
            const std::string fw = where + ".fault";
            check_keys(f, {"kind", "target", "parameter", "seed"}, fw);
            read_enum(f, "kind", c.drift.fault.kind, fw, fault_kind_from_string);
            read(f, "target", c.drift.fault.target, fw);
            read(f, "parameter", c.drift.fault.parameter, fw);
            read(f, "seed", c.drift.fault.seed, fw);
        }
    }
    if (j.contains("windows")) {
        const auto& w = j["windows"];
        const std::string where = root + ".windows";
        check_keys(w, {"onset", "train_fraction", "dstar", "post_eval", "folds"}, where);
        read(w, "onset", c.windows.onset, where);
        read(w, "train_fraction", c.windows.train_fraction, where);
        read(w, "dstar", c.windows.dstar, where);
        read(w, "post_eval", c.windows.post_eval, where);
        read(w, "folds", c.windows.folds, where);
    }
    if (j.contains("ae")) read_ae(j["ae"], c.ae, root + ".ae");
    if (j.contains("unlearn")) read_unlearn(j["unlearn"], c.unlearn, root + ".unlearn");
    if (j.contains("logistic")) read_logistic(j["logistic"], c.logistic, root + ".logistic");
    read(j, "seed", c.seed, root);
    read(j, "threads", c.threads, root);
    read(j, "output_dir", c.output_dir, root);
    c.validate();
    return c;
}

ScenarioConfig load_scenario_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    try {
        return scenario_config_from_json(j);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

Seed derive_seed(Seed seed, const std::string& tag, std::uint64_t index) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : tag) h = (h ^ ch) * 1099511628211ULL;
    return splitmix64(splitmix64(seed ^ h) + index);
}

double condition_value(const Conditions& c, std::size_t i) {
    switch (i) {
        case 0:
            return c.before;
        case 1:
            return c.after_drift;
        case 2:
            return c.ae_baseline;
        case 3:
            return c.unlearned;
    }
    throw ContractError("condition index out of range");
}

double& condition_value(Conditions& c, std::size_t i) {
    switch (i) {
        case 0:
            return c.before;
        case 1:
            return c.after_drift;
        case 2:
            return c.ae_baseline;
        case 3:
            return c.unlearned;
    }
    throw ContractError("condition index out of range");
}

ScenarioReport run_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    const auto t0 = Clock::now();
    ScenarioReport r;
    r.config = cfg;
    if (cfg.data.source == DataSource::Digits) {
        run_digits(cfg, r);
    } else {
        run_stream(cfg, r);
    }
    if (!(r.loss_ratio >= kLossRatioWarning)) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "post/pre reconstruction loss ratio %.3g is below %.1f; the drift may be hard to correct",
                      r.loss_ratio, kLossRatioWarning);
        r.warnings.emplace_back(buf);
    }
    r.runtimes.total = seconds_since(t0);
    return r;
}

bool improved(const ScenarioReport& r) { return r.loss_unlearned < r.loss_post; }

bool protocol_intact(const ScenarioReport& r) {
    for (const auto& u : r.units) {
        if (u.hashes.empty()) return false;
        for (const auto& h : u.hashes) {
            if (h.autoencoder != u.hashes.front().autoencoder || h.downstream != u.hashes.front().downstream) {
                return false;
            }
        }
    }
    return !r.units.empty();
}

double median(std::vector<double> values) {
    if (values.empty()) return kNaN;
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size() / 2;
    return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

double variance(const std::vector<double>& values) {
    if (values.size() < 2) return 0.0;
    const double mu = mean_of(values);
    double s = 0.0;
    for (double v : values) s += (v - mu) * (v - mu);
    return s / static_cast<double>(values.size() - 1);
}

ScenarioConfig suite_scenario_config(const ScenarioConfig& base, Seed seed, std::size_t index) {
    if (base.data.source == DataSource::Digits) throw ConfigError("suites need a sensor stream, not digits");
    ScenarioConfig c = base;
    c.seed = derive_seed(seed, "scenario", index);
    c.drift.kind = DriftKind::Sampled;
    c.threads = 1;
    return c;
}

SuiteReport summarize_suite(const ScenarioConfig& base, Seed seed, std::vector<ScenarioReport> scenarios) {
    SuiteReport s;
    s.base = base;
    s.seed = seed;
    s.num_scenarios = scenarios.size();
    s.scenarios = std::move(scenarios);
    std::vector<const ScenarioReport*> kept;
    for (const auto& r : s.scenarios) {
        if (improved(r)) kept.push_back(&r);
    }
    s.kept = kept.size();
    s.filtered = s.num_scenarios - s.kept;
    if (kept.empty()) s.warnings.emplace_back("no scenario was kept; the suite is degenerate and medians are undefined");
    if (s.scenarios.empty()) return s;

    const auto& first = s.scenarios.front().tasks;
    for (std::size_t t = 0; t < first.size(); ++t) {
        TaskSummary sum;
        sum.id = first[t].id;
        std::vector<std::vector<double>> per(4);
        for (const auto* r : kept) {
            if (t >= r->tasks.size() || r->tasks[t].id != sum.id) {
                throw ContractError("scenario reports disagree on the task list");
            }
            const auto& task = r->tasks[t];
            if (task.degenerate) continue;
            for (std::size_t c = 0; c < 4; ++c) per[c].push_back(condition_value(task.mean, c));
        }
        sum.count = per[0].size();
        for (std::size_t c = 0; c < 4; ++c) {
            condition_value(sum.median, c) = median(per[c]);
            condition_value(sum.variance, c) = variance(per[c]);
        }
        s.tasks.push_back(std::move(sum));
    }
    return s;
}

SuiteReport run_suite(const ScenarioConfig& base, std::size_t num_scenarios, Seed seed, const SuiteProgress& progress) {
    base.validate();
    if (num_scenarios < 1) throw ConfigError("a suite needs at least one scenario");
    std::vector<ScenarioConfig> configs;
    for (std::size_t i = 0; i < num_scenarios; ++i) configs.push_back(suite_scenario_config(base, seed, i));

    std::size_t threads = base.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : base.threads;
    threads = std::min(threads, num_scenarios);

    std::vector<ScenarioReport> reports(num_scenarios);
    std::vector<std::exception_ptr> errors(num_scenarios);
    std::atomic<std::size_t> next{0};
    std::mutex progress_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < num_scenarios; i = next++) {
            try {
                reports[i] = run_scenario(configs[i]);
                if (progress) {
                    std::lock_guard lock(progress_mutex);
                    progress(i, reports[i]);
                }
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (std::size_t i = 0; i < num_scenarios; ++i) {
        if (errors[i]) rethrow_with_context(errors[i], "scenario " + std::to_string(i) + ": ");
    }
    return summarize_suite(base, seed, std::move(reports));
}

}  // namespace cdu
