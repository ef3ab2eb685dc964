#include "cdu/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace cdu {

namespace {

constexpr const char* kScenarioFile = "report.json";
constexpr const char* kSuiteFile = "suite.json";

// JSON has no NaN; undefined metrics are written as null.
Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double num_from(const Json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t from_hex(const std::string& s) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (ec != std::errc() || p != s.data() + s.size()) throw DataError("bad hash '" + s + "'");
    return v;
}

Json conditions_json(const Conditions& c) {
    Json j = Json::object();
    for (std::size_t i = 0; i < 4; ++i) j[kConditionNames[i]] = num(condition_value(c, i));
    return j;
}

Conditions conditions_from(const Json& j) {
    Conditions c;
    for (std::size_t i = 0; i < 4; ++i) condition_value(c, i) = num_from(j.at(kConditionNames[i]));
    return c;
}

Json fault_json(const FaultSpec& f) {
    return {{"kind", to_string(f.kind)},
            {"target", f.target},
            {"parameter", f.parameter},
            {"onset", f.onset},
            {"seed", f.seed}};
}

FaultSpec fault_from(const Json& j) {
    FaultSpec f;
    f.kind = fault_kind_from_string(j.at("kind").get<std::string>());
    f.target = j.at("target").get<Eigen::Index>();
    f.parameter = j.at("parameter").get<double>();
    f.onset = j.at("onset").get<Eigen::Index>();
    f.seed = j.at("seed").get<Seed>();
    return f;
}

void check_header(const Json& j, const char* format) {
    if (j.value("format", std::string{}) != format) throw DataError(std::string("not a ") + format + " file");
    const int version = j.at("version").get<int>();
    if (version != kReportVersion) throw DataError("unsupported report version " + std::to_string(version));
}

template <class Fn>
auto guarded(const char* what, Fn&& fn) {
    try {
        return fn();
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed ") + what + ": " + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("malformed ") + what + ": " + e.what());
    }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed: " + path.string());
}

void make_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

Json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        Json j;
        in >> j;
        return j;
    } catch (const Json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string csv_row(const std::string& id, const Conditions& c) {
    std::string row = id;
    for (std::size_t i = 0; i < 4; ++i) row += "," + format_number(condition_value(c, i));
    return row + "\n";
}

constexpr const char* kTasksHeader = "task_id,before,after_drift,ae_baseline,unlearned\n";

std::string fixed(double v, int width, int precision) {
    char buf[64];
    if (std::isnan(v)) {
        std::snprintf(buf, sizeof buf, "%*s", width, "-");
    } else {
        std::snprintf(buf, sizeof buf, "%*.*f", width, precision, v);
    }
    return buf;
}

std::string table_rows(const std::vector<std::pair<std::string, Conditions>>& rows) {
    std::size_t w = 7;
    for (const auto& [id, c] : rows) w = std::max(w, id.size());
    std::ostringstream os;
    os << std::string(w - 7, ' ') << "task_id" << "      before after_drift ae_baseline   unlearned\n";
    for (const auto& [id, c] : rows) {
        os << std::string(w - id.size(), ' ') << id;
        for (std::size_t i = 0; i < 4; ++i) os << ' ' << fixed(condition_value(c, i), 11, 4);
        os << '\n';
    }
    return os.str();
}

}  // namespace

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

Json to_json(const ScenarioReport& r) {
    Json tasks = Json::array();
    for (const auto& t : r.tasks) {
        Json folds = Json::array();
        for (const auto& f : t.folds) folds.push_back(conditions_json(f));
        tasks.push_back({{"id", t.id},
                         {"degenerate", t.degenerate},
                         {"reason", t.reason},
                         {"mean", conditions_json(t.mean)},
                         {"variance", conditions_json(t.variance)},
                         {"folds", folds}});
    }
    Json units = Json::array();
    for (const auto& u : r.units) {
        Json hashes = Json::array();
        for (const auto& h : u.hashes) {
            hashes.push_back(
                {{"condition", h.condition}, {"autoencoder", hex(h.autoencoder)}, {"downstream", hex(h.downstream)}});
        }
        units.push_back({{"unit", u.unit},
                         {"hashes", hashes},
                         {"loss_pre", num(u.loss_pre)},
                         {"loss_post", num(u.loss_post)},
                         {"loss_unlearned", num(u.loss_unlearned)},
                         {"unlearn_shift", num(u.unlearn_shift)},
                         {"objective_initial", num(u.objective_initial)},
                         {"objective_final", num(u.objective_final)},
                         {"unlearn_epochs", u.unlearn_epochs},
                         {"ae_epochs", u.ae_epochs}});
    }
    Json j{{"format", "cdu-scenario-report"},
           {"version", kReportVersion},
           {"config", to_json(r.config)},
           {"regularization", r.config.unlearn.regularization},
           {"seed", r.config.seed},
           {"fault", r.fault ? fault_json(*r.fault) : Json(nullptr)},
           {"tasks", tasks},
           {"units", units},
           {"loss_pre", num(r.loss_pre)},
           {"loss_post", num(r.loss_post)},
           {"loss_unlearned", num(r.loss_unlearned)},
           {"loss_ratio", num(r.loss_ratio)},
           {"unlearn_shift", num(r.unlearn_shift)},
           {"kept", improved(r)},
           {"protocol_intact", protocol_intact(r)},
           {"warnings", r.warnings},
           {"runtimes",
            {{"total", r.runtimes.total}, {"autoencoder", r.runtimes.autoencoder}, {"unlearner", r.runtimes.unlearner}}}};
    return j;
}

ScenarioReport scenario_report_from_json(const Json& j) {
    return guarded("scenario report", [&] {
        check_header(j, "cdu-scenario-report");
        ScenarioReport r;
        r.config = scenario_config_from_json(j.at("config"));
        if (!j.at("fault").is_null()) r.fault = fault_from(j["fault"]);
        for (const auto& t : j.at("tasks")) {
            TaskResult task;
            task.id = t.at("id").get<std::string>();
            task.degenerate = t.at("degenerate").get<bool>();
            task.reason = t.at("reason").get<std::string>();
            task.mean = conditions_from(t.at("mean"));
            task.variance = conditions_from(t.at("variance"));
            for (const auto& f : t.at("folds")) task.folds.push_back(conditions_from(f));
            r.tasks.push_back(std::move(task));
        }
        for (const auto& u : j.at("units")) {
            UnitRecord rec;
            rec.unit = u.at("unit").get<std::size_t>();
            for (const auto& h : u.at("hashes")) {
                rec.hashes.push_back(HashRecord{h.at("condition").get<std::string>(),
                                                from_hex(h.at("autoencoder").get<std::string>()),
                                                from_hex(h.at("downstream").get<std::string>())});
            }
            rec.loss_pre = num_from(u.at("loss_pre"));
            rec.loss_post = num_from(u.at("loss_post"));
            rec.loss_unlearned = num_from(u.at("loss_unlearned"));
            rec.unlearn_shift = num_from(u.at("unlearn_shift"));
            rec.objective_initial = num_from(u.at("objective_initial"));
            rec.objective_final = num_from(u.at("objective_final"));
            rec.unlearn_epochs = u.at("unlearn_epochs").get<std::size_t>();
            rec.ae_epochs = u.at("ae_epochs").get<std::size_t>();
            r.units.push_back(std::move(rec));
        }
        r.loss_pre = num_from(j.at("loss_pre"));
        r.loss_post = num_from(j.at("loss_post"));
        r.loss_unlearned = num_from(j.at("loss_unlearned"));
        r.loss_ratio = num_from(j.at("loss_ratio"));
        r.unlearn_shift = num_from(j.at("unlearn_shift"));
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        const auto& rt = j.at("runtimes");
        r.runtimes = Runtimes{rt.at("total").get<double>(), rt.at("autoencoder").get<double>(),
                              rt.at("unlearner").get<double>()};
        return r;
    });
}

Json to_json(const SuiteReport& s) {
    Json scenarios = Json::array();
    for (const auto& r : s.scenarios) scenarios.push_back(to_json(r));
    Json tasks = Json::array();
    for (const auto& t : s.tasks) {
        tasks.push_back({{"id", t.id},
                         {"count", t.count},
                         {"median", conditions_json(t.median)},
                         {"variance", conditions_json(t.variance)}});
    }
    return {{"format", "cdu-suite-report"},
            {"version", kReportVersion},
            {"base", to_json(s.base)},
            {"num_scenarios", s.num_scenarios},
            {"seed", s.seed},
            {"kept", s.kept},
            {"filtered", s.filtered},
            {"tasks", tasks},
            {"warnings", s.warnings},
            {"scenarios", scenarios}};
}

SuiteReport suite_report_from_json(const Json& j) {
    return guarded("suite report", [&] {
        check_header(j, "cdu-suite-report");
        SuiteReport s;
        s.base = scenario_config_from_json(j.at("base"));
        s.num_scenarios = j.at("num_scenarios").get<std::size_t>();
        s.seed = j.at("seed").get<Seed>();
        s.kept = j.at("kept").get<std::size_t>();
        s.filtered = j.at("filtered").get<std::size_t>();
        for (const auto& t : j.at("tasks")) {
            s.tasks.push_back(TaskSummary{t.at("id").get<std::string>(), t.at("count").get<std::size_t>(),
                                          conditions_from(t.at("median")), conditions_from(t.at("variance"))});
        }
        s.warnings = j.at("warnings").get<std::vector<std::string>>();
        for (const auto& r : j.at("scenarios")) s.scenarios.push_back(scenario_report_from_json(r));
        if (s.kept + s.filtered != s.num_scenarios || s.scenarios.size() != s.num_scenarios) {
            throw DataError("suite report counts are inconsistent");
        }
        return s;
    });
}

bool same_results(const ScenarioReport& a, const ScenarioReport& b) {
    Json ja = to_json(a), jb = to_json(b);
    ja.erase("runtimes");
    jb.erase("runtimes");
    return ja == jb;
}

std::string tasks_csv(const ScenarioReport& r) {
    std::string out = kTasksHeader;
    for (const auto& t : r.tasks) out += csv_row(t.id, t.mean);
    return out;
}

std::string tasks_csv(const SuiteReport& s) {
    std::string out = kTasksHeader;
    for (const auto& t : s.tasks) out += csv_row(t.id, t.median);
    return out;
}

std::string long_csv(const ScenarioReport& r) {
    std::string out = "unit,task_id,condition,value,degenerate\n";
    for (const auto& t : r.tasks) {
        for (std::size_t u = 0; u < t.folds.size(); ++u) {
            for (std::size_t i = 0; i < 4; ++i) {
                out += std::to_string(u) + "," + t.id + "," + kConditionNames[i] + "," +
                       format_number(condition_value(t.folds[u], i)) + "," + (t.degenerate ? "1" : "0") + "\n";
            }
        }
    }
    return out;
}

std::string long_csv(const SuiteReport& s) {
    std::string out = "scenario,task_id,condition,value,kept,degenerate\n";
    for (std::size_t k = 0; k < s.scenarios.size(); ++k) {
        const auto& r = s.scenarios[k];
        const char* kept = improved(r) ? "1" : "0";
        for (const auto& t : r.tasks) {
            for (std::size_t i = 0; i < 4; ++i) {
                out += std::to_string(k) + "," + t.id + "," + kConditionNames[i] + "," +
                       format_number(condition_value(t.mean, i)) + "," + kept + "," + (t.degenerate ? "1" : "0") +
                       "\n";
            }
        }
    }
    return out;
}

std::string scenarios_csv(const SuiteReport& s) {
    std::string out = "scenario,seed,fault_kind,target,parameter,loss_pre,loss_post,loss_unlearned,loss_ratio,kept\n";
    for (std::size_t k = 0; k < s.scenarios.size(); ++k) {
        const auto& r = s.scenarios[k];
        out += std::to_string(k) + "," + std::to_string(r.config.seed) + ",";
        if (r.fault) {
            out += to_string(r.fault->kind) + "," + std::to_string(r.fault->target) + "," +
                   format_number(r.fault->parameter);
        } else {
            out += "none,,";
        }
        out += "," + format_number(r.loss_pre) + "," + format_number(r.loss_post) + "," +
               format_number(r.loss_unlearned) + "," + format_number(r.loss_ratio) + "," +
               (improved(r) ? "1" : "0") + "\n";
    }
    return out;
}

void write_report(const ScenarioReport& r, const std::filesystem::path& dir) {
    make_dir(dir);
    write_file(dir / kScenarioFile, to_json(r).dump(1) + "\n");
    write_file(dir / "tasks.csv", tasks_csv(r));
    write_file(dir / "metrics_long.csv", long_csv(r));
}

void write_report(const SuiteReport& s, const std::filesystem::path& dir) {
    make_dir(dir);
    write_file(dir / kSuiteFile, to_json(s).dump(1) + "\n");
    write_file(dir / "tasks.csv", tasks_csv(s));
    write_file(dir / "metrics_long.csv", long_csv(s));
    write_file(dir / "scenarios.csv", scenarios_csv(s));
}

AnyReport load_report(const std::filesystem::path& dir) {
    if (std::filesystem::exists(dir / kSuiteFile)) return suite_report_from_json(read_json(dir / kSuiteFile));
    if (std::filesystem::exists(dir / kScenarioFile)) return scenario_report_from_json(read_json(dir / kScenarioFile));
    if (std::filesystem::is_regular_file(dir)) {
        const Json j = read_json(dir);
        if (j.value("format", std::string{}) == "cdu-suite-report") return suite_report_from_json(j);
        return scenario_report_from_json(j);
    }
    throw DataError("no report found in " + dir.string());
}

std::string format_csv(const AnyReport& report) {
    return std::visit([](const auto& r) { return tasks_csv(r); }, report);
}

std::string format_table(const AnyReport& report) {
    std::ostringstream os;
    std::vector<std::pair<std::string, Conditions>> rows;
    if (const auto* r = std::get_if<ScenarioReport>(&report)) {
        os << "scenario: source=" << to_string(r->config.data.source) << " drift=" << to_string(r->config.drift.kind)
           << " seed=" << r->config.seed << " C=" << format_number(r->config.unlearn.regularization) << "\n";
        if (r->fault) {
            os << "fault: " << to_string(r->fault->kind) << " on feature " << r->fault->target
               << " parameter=" << format_number(r->fault->parameter) << " onset=" << r->fault->onset << "\n";
        }
        os << "ae loss pre=" << fixed(r->loss_pre, 0, 4) << " post=" << fixed(r->loss_post, 0, 4)
           << " unlearned=" << fixed(r->loss_unlearned, 0, 4) << " ratio=" << fixed(r->loss_ratio, 0, 2)
           << " kept=" << (improved(*r) ? "yes" : "no") << " protocol=" << (protocol_intact(*r) ? "intact" : "BROKEN")
           << "\n";
        for (const auto& t : r->tasks) rows.emplace_back(t.id + (t.degenerate ? "*" : ""), t.mean);
        os << table_rows(rows);
        for (const auto& w : r->warnings) os << "warning: " << w << "\n";
    } else {
        const auto& s = std::get<SuiteReport>(report);
        os << "suite: " << s.num_scenarios << " scenarios, seed=" << s.seed << ", kept=" << s.kept
           << ", filtered=" << s.filtered << "\n";
        os << "per-task medians over kept scenarios:\n";
        for (const auto& t : s.tasks) rows.emplace_back(t.id, t.median);
        os << table_rows(rows);
        for (const auto& w : s.warnings) os << "warning: " << w << "\n";
    }
    return os.str();
}

}  // namespace cdu
