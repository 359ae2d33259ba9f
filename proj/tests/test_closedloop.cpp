#include <doctest.h>

#include "irriloop/closedloop.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace irriloop;

namespace {

LstmModel small_model() {
    return LstmModel("m", Network::initialized(sub_model_spec(1, 6, 6), 4), fit_scaler(2.5e-7));
}

RunConfig short_run(int n_sim) {
    RunConfig c;
    c.label = "short";
    c.n_sim = n_sim;
    c.zone.horizon = 4;
    c.zmpc.horizon = 4;
    c.zmpc.iterations = 40;
    c.zmpc.restarts = 1;
    c.correction_f = 2;
    c.scenario.seed = 9;
    return c;
}

}  // namespace

TEST_CASE("total irrigation converts rates to millimetres") {
    CHECK(total_irrigation(std::vector<double>(12, 1e-7), 7200.0) == doctest::Approx(8.64));
    CHECK(total_irrigation({}, 7200.0) == 0.0);
    CHECK_THROWS_AS(total_irrigation({-1e-9}, 7200.0), std::invalid_argument);
}

TEST_CASE("zone violation averages the distance to the band") {
    CHECK(zone_violation({0.17, 0.20, 0.235}) == doctest::Approx(0.015 / 3.0).epsilon(1e-12));
    CHECK(zone_violation({0.18, 0.23, 0.2}) == 0.0);
    CHECK(zone_violation({0.179, 0.2, 0.2, 0.2, 0.2, 0.2}) == doctest::Approx(1e-3 / 6.0).epsilon(1e-9));
    CHECK_THROWS_AS(zone_violation({}), std::invalid_argument);
}

TEST_CASE("forecasts stay within the error band and keep dry steps dry") {
    const WeatherSeries truth = rain_weather(60, 5e-8, 6e-7);
    const WeatherSeries f = make_forecast(truth, 0.2, 3);
    REQUIRE(f.size() == truth.size());
    bool differs = false;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const WeatherSample& a = truth.samples[i];
        const WeatherSample& b = f.samples[i];
        CHECK(b.precipitation >= 0.8 * a.precipitation - 1e-20);
        CHECK(b.precipitation <= 1.2 * a.precipitation + 1e-20);
        CHECK(b.et0 >= 0.8 * a.et0 - 1e-20);
        CHECK(b.et0 <= 1.2 * a.et0 + 1e-20);
        if (a.precipitation == 0.0) CHECK(b.precipitation == 0.0);
        differs = differs || b.precipitation != a.precipitation;
    }
    CHECK(differs);

    const WeatherSeries exact = make_forecast(truth, 0.0, 3);
    for (std::size_t i = 0; i < truth.size(); ++i) CHECK(exact.samples[i].precipitation == truth.samples[i].precipitation);
    CHECK_THROWS_AS(make_forecast(truth, -0.1, 3), std::invalid_argument);
}

TEST_CASE("scenarios have the requested length and rain only when asked") {
    ScenarioSpec spec;
    spec.kind = ScenarioKind::rain;
    const WeatherScenario rain = make_scenario(spec, 80);
    CHECK(rain.truth.size() == 80);
    CHECK(rain.forecast.size() == 80);
    double total = 0.0;
    for (const auto& s : rain.truth.samples) total += s.precipitation;
    CHECK(total > 0.0);
    for (const auto& s : without_rain(rain).forecast.samples) CHECK(s.precipitation == 0.0);

    spec.kind = ScenarioKind::dry;
    for (const auto& s : make_scenario(spec, 80).truth.samples) CHECK(s.precipitation == 0.0);
    CHECK(scenario_kind_from_string(to_string(ScenarioKind::calm)) == ScenarioKind::calm);
    CHECK_THROWS_AS(scenario_kind_from_string("storm"), std::invalid_argument);
}

TEST_CASE("run configs are validated") {
    RunConfig c = short_run(3);
    CHECK_NOTHROW(c.validate());
    c.zone.horizon = 5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = short_run(3);
    c.correction_f = 3;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = short_run(3);
    c.controller = ControllerModel::richards;
    c.plant = PlantModel::surrogate;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = short_run(0);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("surrogate-controlled soil column run is deterministic and bounded") {
    const SoilColumn column(SoilParams{}, ColumnGeometry{});
    const LstmModel model = small_model();
    ModelSet models;
    models.two_layer = &model;
    RunConfig c = short_run(6);
    c.noise = {0.02, 0.02, 5};

    const RunMetrics a = run_closed_loop(c, column, models);
    const RunMetrics b = run_closed_loop(c, column, models);
    REQUIRE_FALSE(a.failed);
    REQUIRE(a.log.size() == 6);
    REQUIRE(a.y_after.size() == 6);
    std::vector<double> u;
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].u == b.log[i].u);
        CHECK(a.y_after[i] == b.y_after[i]);
        CHECK(a.log[i].u >= 0.0);
        CHECK(a.log[i].u <= c.zmpc.u_max);
        CHECK(std::abs(a.log[i].y_meas / a.log[i].y_true - 1.0) <= 0.02 + 1e-12);
        u.push_back(a.log[i].u);
    }
    CHECK(a.irrigation_mm == doctest::Approx(total_irrigation(u, c.dt)));
    CHECK(a.zone_violation == doctest::Approx(zone_violation(a.y_after)));
    CHECK(a.mass_balance_error < 1e-6);

    ModelSet empty;
    CHECK_THROWS_AS(run_closed_loop(c, column, empty), std::invalid_argument);
}

TEST_CASE("surrogate plant run writes a trajectory file") {
    const SoilColumn column(SoilParams{}, ColumnGeometry{});
    const LstmModel model = small_model();
    ModelSet models;
    models.single_lstm = &model;
    RunConfig c = short_run(4);
    c.plant = PlantModel::surrogate;
    c.controller = ControllerModel::single_lstm;
    const RunMetrics m = run_closed_loop(c, column, models);
    REQUIRE(m.y_after.size() == 4);
    for (double y : m.y_after) {
        CHECK(y >= model.bounds.lo);
        CHECK(y <= model.bounds.hi);
    }
    const auto path = std::filesystem::temp_directory_path() / "irriloop_test_traj.csv";
    write_trajectory_csv(path, m);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header.find("u_mps") != std::string::npos);
    int lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == 4);
    std::filesystem::remove(path);
}

TEST_CASE("physics-model controller stays idle above the zone") {
    const SoilColumn column(SoilParams{}, ColumnGeometry{});
    RunConfig c = short_run(1);
    c.controller = ControllerModel::richards;
    c.h0 = -0.05;
    c.zmpc.iterations = 5;
    const RunMetrics m = run_closed_loop(c, column, ModelSet{});
    REQUIRE(m.log.size() == 1);
    CHECK(m.log[0].y_true > 0.23);
    CHECK(m.log[0].u == doctest::Approx(0.0).epsilon(1e-12).scale(1e-12));
}

TEST_CASE("battery compares every row with the benchmark") {
    const SoilColumn column(SoilParams{}, ColumnGeometry{});
    const LstmModel model = small_model();
    ModelSet models;
    models.two_layer = &model;
    std::vector<RunConfig> configs{short_run(3), short_run(3)};
    configs[1].label = "shrink";
    configs[1].zone.mu = 1.0;
    configs.push_back(short_run(3));
    configs[2].label = "broken";
    configs[2].controller = ControllerModel::single_lstm;
    const auto rows = scenario_battery(configs, column, models);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].irrigation_diff_pct == 0.0);
    CHECK(rows[2].metrics.failed);
    const auto path = std::filesystem::temp_directory_path() / "irriloop_test_battery.csv";
    write_battery_csv(path, rows);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("label,controller,mu", 0) == 0);
    std::filesystem::remove(path);
}
