#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "cdu/harness.hpp"
#include "cdu/report.hpp"

using namespace cdu;

namespace {

// Small stream so whole scenarios run in about a second.
ScenarioConfig small_config() {
    ScenarioConfig c;
    c.data.synth.sensors = 8;
    c.data.synth.factors = 2;
    c.data.synth.samples = 700;
    c.windows.onset = 400;
    c.windows.dstar = 100;
    c.ae.max_epochs = 60;
    c.unlearn.max_epochs = 60;
    c.seed = 4;
    return c;
}

ScenarioReport fake_report(double loss_post, double loss_unlearned, double unlearned_value) {
    ScenarioReport r;
    r.loss_post = loss_post;
    r.loss_unlearned = loss_unlearned;
    TaskResult t;
    t.id = "sensor_0";
    t.mean = {1.0, 0.5, 0.4, unlearned_value};
    r.tasks.push_back(t);
    return r;
}

}  // namespace

TEST_CASE("config: defaults survive a JSON round trip") {
    const ScenarioConfig c = small_config();
    const ScenarioConfig back = scenario_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
}

TEST_CASE("config: unknown keys, wrong types and bad values are rejected") {
    CHECK_THROWS_AS(scenario_config_from_json(Json::parse(R"({"sed": 1})")), ConfigError);
    CHECK_THROWS_AS(scenario_config_from_json(Json::parse(R"({"ae": {"hiden": [4]}})")), ConfigError);
    CHECK_THROWS_AS(scenario_config_from_json(Json::parse(R"({"unlearn": {"adam": {"lr": 0.1}}})")), ConfigError);
    CHECK_THROWS_AS(scenario_config_from_json(Json::parse(R"({"seed": "one"})")), ConfigError);
    CHECK_THROWS_AS(scenario_config_from_json(Json::parse(R"({"drift": {"kind": "sudden"}})")), ConfigError);
    CHECK_THROWS_AS(scenario_config_from_json(Json::parse(R"({"unlearn": {"regularization": -1}})")), ConfigError);
    CHECK_THROWS_AS(scenario_config_from_json(Json::parse(R"({"windows": {"train_fraction": 1.0}})")), ConfigError);
    CHECK_THROWS_AS(scenario_config_from_json(Json::parse(R"({"data": {"source": "digits"}})")), ConfigError);
    CHECK_NOTHROW(scenario_config_from_json(Json::parse(R"({"data": {"source": "digits"}, "drift": {"kind": "none"}})")));
    CHECK_THROWS_AS(load_scenario_config("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("config: windows that do not fit the stream are a config error") {
    ScenarioConfig c = small_config();
    c.windows.onset = 650;
    CHECK_THROWS_AS(run_scenario(c), ConfigError);
}

TEST_CASE("derive_seed: tags and indices give distinct, stable streams") {
    CHECK(derive_seed(1, "ae", 0) == derive_seed(1, "ae", 0));
    CHECK(derive_seed(1, "ae", 0) != derive_seed(1, "ae", 1));
    CHECK(derive_seed(1, "ae", 0) != derive_seed(1, "unlearn", 0));
    CHECK(derive_seed(1, "ae", 0) != derive_seed(2, "ae", 0));
}

TEST_CASE("median and variance") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK(median({5.0}) == 5.0);
    CHECK(std::isnan(median({})));
    CHECK(variance({1.0, 2.0, 3.0, 4.0}) == doctest::Approx(5.0 / 3.0));
    CHECK(variance({7.0}) == 0.0);
}

TEST_CASE("run_scenario: reproducible, hashes intact, reports and CSVs are consistent") {
    ScenarioConfig c = small_config();
    c.drift.kind = DriftKind::Fault;
    c.drift.fault.kind = FaultKind::ConstantOffset;
    c.drift.fault.target = 2;
    c.drift.fault.parameter = 3.0;
    const ScenarioReport a = run_scenario(c), b = run_scenario(c);
    CHECK(same_results(a, b));
    CHECK(protocol_intact(a));
    REQUIRE(a.units.size() == 1);
    CHECK(a.units[0].hashes.size() == 4);
    CHECK(a.tasks.size() == 8);
    CHECK(a.loss_post > a.loss_pre);
    REQUIRE(a.fault);
    CHECK(a.fault->onset == 400);

    const ScenarioReport back = scenario_report_from_json(Json::parse(to_json(a).dump()));
    CHECK(same_results(a, back));
    CHECK(tasks_csv(a) == tasks_csv(back));

    std::istringstream csv(tasks_csv(a));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "task_id,before,after_drift,ae_baseline,unlearned");
    std::size_t rows = 0;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == a.tasks.size());

    std::istringstream longer(long_csv(a));
    rows = 0;
    while (std::getline(longer, line)) ++rows;
    CHECK(rows == 1 + a.tasks.size() * 4);

    const auto dir = std::filesystem::temp_directory_path() / "cdu_test_scenario_report";
    write_report(a, dir);
    const auto loaded = load_report(dir);
    REQUIRE(std::holds_alternative<ScenarioReport>(loaded));
    CHECK(same_results(std::get<ScenarioReport>(loaded), a));
    CHECK(format_csv(loaded) == tasks_csv(a));
    std::filesystem::remove_all(dir);
}

TEST_CASE("run_scenario: null drift barely moves the data") {
    // Needs a well-trained autoencoder; a weak one legitimately pulls clean data onto its manifold.
    ScenarioConfig c;
    c.seed = 4;
    c.drift.kind = DriftKind::None;
    const ScenarioReport r = run_scenario(c);
    CHECK(r.unlearn_shift <= 0.05);
    CHECK_FALSE(r.fault);
    for (const auto& t : r.tasks) CHECK(std::abs(t.mean.unlearned - t.mean.after_drift) <= 0.01);
}

TEST_CASE("run_scenario: a dead sensor makes its own task degenerate, not the others") {
    ScenarioConfig c = small_config();
    c.drift.kind = DriftKind::Fault;
    c.drift.fault.kind = FaultKind::PowerFailure;
    c.drift.fault.target = 5;
    const ScenarioReport r = run_scenario(c);
    std::size_t degenerate = 0;
    for (const auto& t : r.tasks) {
        if (t.degenerate) {
            ++degenerate;
            CHECK(t.id == "sensor_5");
            CHECK_FALSE(t.reason.empty());
            CHECK(std::isnan(t.mean.after_drift));
        }
    }
    CHECK(degenerate == 1);
    CHECK(tasks_csv(r).find("nan") != std::string::npos);
    const ScenarioReport back = scenario_report_from_json(Json::parse(to_json(r).dump()));
    CHECK(same_results(r, back));
}

TEST_CASE("suite: scenario configs differ only in seed and fault") {
    const ScenarioConfig base = small_config();
    const auto c0 = suite_scenario_config(base, 9, 0), c1 = suite_scenario_config(base, 9, 1);
    CHECK(c0.seed != c1.seed);
    CHECK(c0.drift.kind == DriftKind::Sampled);
    CHECK(c0.data.synth.mixing_seed == base.data.synth.mixing_seed);
    CHECK(suite_scenario_config(base, 9, 0).seed == c0.seed);
    ScenarioConfig digits = base;
    digits.data.source = DataSource::Digits;
    digits.drift.kind = DriftKind::Digits;
    CHECK_THROWS_AS(suite_scenario_config(digits, 9, 0), ConfigError);
}

TEST_CASE("suite: keep rule filters scenarios before the medians") {
    std::vector<ScenarioReport> rs;
    rs.push_back(fake_report(1.0, 0.5, 0.9));   // kept
    rs.push_back(fake_report(1.0, 2.0, 0.1));   // filtered
    rs.push_back(fake_report(1.0, 0.2, 0.7));   // kept
    rs.push_back(fake_report(1.0, 1.0, 0.0));   // ties are filtered
    const SuiteReport s = summarize_suite(ScenarioConfig{}, 1, rs);
    CHECK(s.kept == 2);
    CHECK(s.filtered == 2);
    REQUIRE(s.tasks.size() == 1);
    CHECK(s.tasks[0].count == 2);
    CHECK(s.tasks[0].median.unlearned == doctest::Approx(0.8));
    CHECK(s.warnings.empty());

    const SuiteReport none = summarize_suite(ScenarioConfig{}, 1, {fake_report(1.0, 3.0, 0.5)});
    CHECK(none.kept == 0);
    CHECK_FALSE(none.warnings.empty());
}

TEST_CASE("suite: a single scenario's medians are its own values") {
    const SuiteReport s = run_suite(small_config(), 1, 3);
    REQUIRE(s.scenarios.size() == 1);
    const auto& r = s.scenarios[0];
    if (s.kept == 1) {
        for (std::size_t t = 0; t < r.tasks.size(); ++t) {
            if (r.tasks[t].degenerate) continue;
            for (std::size_t k = 0; k < 4; ++k)
                CHECK(condition_value(s.tasks[t].median, k) == condition_value(r.tasks[t].mean, k));
        }
    } else {
        for (const auto& t : s.tasks) CHECK(t.count == 0);
    }
    const SuiteReport back = suite_report_from_json(Json::parse(to_json(s).dump()));
    CHECK(tasks_csv(back) == tasks_csv(s));
    CHECK(scenarios_csv(back) == scenarios_csv(s));
}

TEST_CASE("protocol_intact: any moved hash breaks it") {
    ScenarioReport r;
    CHECK_FALSE(protocol_intact(r));
    UnitRecord u;
    for (const char* c : kConditionNames) u.hashes.push_back({c, 11, 22});
    r.units.push_back(u);
    CHECK(protocol_intact(r));
    r.units[0].hashes[3].downstream = 23;
    CHECK_FALSE(protocol_intact(r));
    r.units[0].hashes[3].downstream = 22;
    r.units[0].hashes[2].autoencoder = 12;
    CHECK_FALSE(protocol_intact(r));
}

TEST_CASE("format_number") {
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(std::nan("")) == "nan");
    CHECK(format_number(1.0) == "1");
}
