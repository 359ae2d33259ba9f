#include "irriloop/closedloop.hpp"

#include "irriloop/csv.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>

namespace irriloop {

void NoiseSpec::validate() const {
    if (!(process_frac >= 0.0) || !(measurement_frac >= 0.0)) {
        throw std::invalid_argument("noise fractions must be >= 0");
    }
}

WeatherSeries make_forecast(const WeatherSeries& truth, double error_frac, std::uint64_t seed) {
    if (!(error_frac >= 0.0)) throw std::invalid_argument("forecast error must be >= 0");
    WeatherSeries f = truth;
    if (error_frac == 0.0) return f;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> factor(1.0 - error_frac, 1.0 + error_frac);
    for (WeatherSample& s : f.samples) {
        s.precipitation = std::max(0.0, s.precipitation * factor(rng));
        s.et0 = std::max(0.0, s.et0 * factor(rng));
    }
    return f;
}

std::string to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::calm: return "calm";
        case ScenarioKind::dry: return "dry";
        case ScenarioKind::rain: return "rain";
    }
    return "dry";
}

ScenarioKind scenario_kind_from_string(const std::string& s) {
    if (s == "calm") return ScenarioKind::calm;
    if (s == "dry") return ScenarioKind::dry;
    if (s == "rain") return ScenarioKind::rain;
    throw std::invalid_argument("unknown weather scenario `" + s + "`");
}

WeatherScenario make_scenario(const ScenarioSpec& spec, std::size_t length, double dt) {
    WeatherScenario sc;
    switch (spec.kind) {
        case ScenarioKind::calm: sc.truth = calm_weather(length, dt); break;
        case ScenarioKind::dry: sc.truth = dry_weather(length, spec.et0_peak, spec.kc, dt); break;
        case ScenarioKind::rain:
            sc.truth = rain_weather(length, spec.et0_peak, spec.rain_peak, spec.kc, dt);
            break;
    }
    sc.forecast = make_forecast(sc.truth, spec.forecast_error, spec.seed);
    return sc;
}

WeatherScenario without_rain(const WeatherScenario& scenario) {
    WeatherScenario out = scenario;
    for (auto* series : {&out.truth, &out.forecast}) {
        for (WeatherSample& s : series->samples) s.precipitation = 0.0;
    }
    return out;
}

std::string to_string(ControllerModel m) {
    switch (m) {
        case ControllerModel::richards: return "richards";
        case ControllerModel::single_lstm: return "single_lstm";
        case ControllerModel::two_layer: return "two_layer";
    }
    return "two_layer";
}

ControllerModel controller_model_from_string(const std::string& s) {
    if (s == "richards") return ControllerModel::richards;
    if (s == "single_lstm") return ControllerModel::single_lstm;
    if (s == "two_layer") return ControllerModel::two_layer;
    throw std::invalid_argument("unknown controller model `" + s + "`");
}

std::string to_string(PlantModel m) {
    return m == PlantModel::surrogate ? "surrogate" : "richards";
}

PlantModel plant_model_from_string(const std::string& s) {
    if (s == "richards") return PlantModel::richards;
    if (s == "surrogate") return PlantModel::surrogate;
    throw std::invalid_argument("unknown plant model `" + s + "`");
}

void RunConfig::validate() const {
    if (n_sim < 1) throw std::invalid_argument("run: n_sim must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("run: dt must be positive");
    if (!(h0 < 0.0)) throw std::invalid_argument("run: initial potential must be negative");
    if (zone.horizon != zmpc.horizon) throw std::invalid_argument("run: zone and controller horizons differ");
    if (plant == PlantModel::surrogate && controller == ControllerModel::richards) {
        throw std::invalid_argument("run: the richards controller needs the richards plant");
    }
    if (correction != CorrectionKind::none && !valid_frequency(correction, correction_f, zmpc.horizon)) {
        throw std::invalid_argument("run: correction frequency does not divide the horizon");
    }
    zone.validate();
    zmpc.validate();
    noise.validate();
}

double total_irrigation(const std::vector<double>& u, double dt) {
    double s = 0.0;
    for (double v : u) {
        if (!(v >= 0.0)) throw std::invalid_argument("total_irrigation: inputs must be >= 0");
        s += v * dt * 1000.0;
    }
    return s;
}

double zone_violation(const std::vector<double>& y, double lo, double hi) {
    if (y.empty()) throw std::invalid_argument("zone_violation: empty trajectory");
    double s = 0.0;
    for (double v : y) s += interval_distance(v, lo, hi);
    return s / static_cast<double>(y.size());
}

namespace {

const OneStepModel& pick_model(ControllerModel m, const ModelSet& models) {
    const OneStepModel* p = m == ControllerModel::single_lstm ? models.single_lstm : models.two_layer;
    if (!p) throw std::invalid_argument("closed loop: no " + to_string(m) + " model loaded");
    return *p;
}

/// Scales the root-node water content by `factor` and re-derives its potential.
void perturb_root(const SoilColumn& column, SoilColumnState& state, double factor) {
    const SoilParams& sp = column.params();
    const auto root = static_cast<std::size_t>(column.geometry().root_node_index());
    const double theta = std::clamp(column.measure_output(state) * factor, sp.theta_r + 1e-6, sp.theta_s - 1e-6);
    state.h[root] = std::min(potential_from_water_content(theta, sp), column.options().h_max);
}

}  // namespace

RunMetrics run_closed_loop(const RunConfig& config, const SoilColumn& column, const ModelSet& models,
                           const WeatherScenario& scenario) {
    config.validate();
    const std::size_t needed = static_cast<std::size_t>(config.n_sim + config.zmpc.horizon);
    if (scenario.truth.size() < static_cast<std::size_t>(config.n_sim) || scenario.forecast.size() < needed) {
        throw std::invalid_argument("closed loop: weather shorter than n_sim + N");
    }

    RunMetrics out;
    out.label = config.label;
    ZmpcConfig zcfg = config.zmpc;
    zcfg.dt = config.dt;

    SoilColumnState state = column.uniform_state(config.h0);
    const double y0 = column.measure_output(state);

    std::unique_ptr<Controller> controller;
    if (config.controller == ControllerModel::richards) {
        controller = std::make_unique<RichardsController>(column, zcfg, config.zone, config.warm_start);
    } else {
        CorrectionState corr(config.correction, config.correction == CorrectionKind::none ? 1 : config.correction_f,
                             {0.8, 1.5}, {-0.2, 0.3}, ErrorReference::raw);
        controller = std::make_unique<SurrogateController>(pick_model(config.controller, models), zcfg,
                                                           config.zone, std::move(corr), y0, config.warm_start);
    }

    // Surrogate plant: its own history of (u + P, y).
    const OneStepModel* plant_model = nullptr;
    Eigen::MatrixXd plant_hist;
    double plant_y = y0;
    if (config.plant == PlantModel::surrogate) {
        plant_model = models.two_layer ? models.two_layer : models.single_lstm;
        if (!plant_model) throw std::invalid_argument("closed loop: surrogate plant needs a model");
        plant_hist = Eigen::MatrixXd::Zero(plant_model->window(), 2);
        plant_hist.col(1).setConstant(y0);
    }

    std::mt19937_64 process_rng(config.noise.seed);
    std::mt19937_64 measure_rng(config.noise.seed ^ 0x5851f42d4c957f2dULL);
    std::uniform_real_distribution<double> pn(-config.noise.process_frac, config.noise.process_frac);
    std::uniform_real_distribution<double> mn(-config.noise.measurement_frac, config.noise.measurement_frac);

    std::vector<double> applied;
    double solve_total = 0.0;
    const auto [zlo, zhi] = zone_bounds(0, config.zone);
    for (int i = 0; i < config.n_sim; ++i) {
        StepLog log;
        log.t = i * config.dt;
        log.y_true = config.plant == PlantModel::richards ? column.measure_output(state) : plant_y;
        const double e_m = config.noise.measurement_frac > 0.0 ? mn(measure_rng) : 0.0;
        log.y_meas = log.y_true * (1.0 + e_m);
        log.zone_lo = zlo;
        log.zone_hi = zhi;
        const WeatherSample w = scenario.truth.at(static_cast<std::size_t>(i));
        log.precipitation = w.precipitation;
        log.et0 = w.et0;

        ControllerInput in;
        in.y_meas = log.y_meas;
        in.forecast.assign(scenario.forecast.samples.begin() + i,
                           scenario.forecast.samples.begin() + i + config.zmpc.horizon);
        in.plant = config.plant == PlantModel::richards ? &state : nullptr;

        const ControllerStep step = controller->step(in);
        log.u = std::clamp(step.u, 0.0, zcfg.u_max);
        log.objective = step.solution.objective;
        log.iterations = step.solution.iterations;
        log.solve_seconds = step.solve_seconds;
        solve_total += step.solve_seconds;
        applied.push_back(log.u);
        out.log.push_back(log);

        const double e_p = config.noise.process_frac > 0.0 ? pn(process_rng) : 0.0;
        if (config.plant == PlantModel::richards) {
            try {
                FluxLedger ledger;
                const double before = column.storage(state);
                state = column.step(state, log.u, w, config.dt, &ledger);
                const double change = column.storage(state) - before;
                const double net = ledger.inflow - ledger.drainage - ledger.transpiration;
                const double scale = std::max({ledger.inflow + std::abs(ledger.drainage) + ledger.transpiration,
                                               std::abs(change), 1e-12});
                out.mass_balance_error = std::max(out.mass_balance_error, std::abs(change - net) / scale);
            } catch (const std::exception& e) {
                out.failed = true;
                out.error = e.what();
                break;
            }
            if (e_p != 0.0) perturb_root(column, state, 1.0 + e_p);
            out.y_after.push_back(column.measure_output(state));
        } else {
            const Eigen::Index p = plant_hist.rows();
            plant_hist(p - 1, 0) = log.u + w.precipitation;
            plant_hist(p - 1, 1) = plant_y;
            double y = std::clamp(plant_model->predict_raw(plant_hist), plant_model->bounds.lo, plant_model->bounds.hi);
            y *= 1.0 + e_p;
            for (Eigen::Index r = 0; r + 1 < p; ++r) plant_hist.row(r) = plant_hist.row(r + 1);
            plant_hist(p - 1, 1) = y;
            plant_hist(p - 1, 0) = 0.0;
            plant_y = y;
            out.y_after.push_back(y);
        }
    }
    out.irrigation_mm = total_irrigation(applied, config.dt);
    if (!out.y_after.empty()) out.zone_violation = zone_violation(out.y_after);
    if (!out.log.empty()) out.mean_solve_seconds = solve_total / static_cast<double>(out.log.size());
    return out;
}

RunMetrics run_closed_loop(const RunConfig& config, const SoilColumn& column, const ModelSet& models) {
    const WeatherScenario sc = make_scenario(config.scenario, static_cast<std::size_t>(config.n_sim + config.zmpc.horizon),
                                             config.dt);
    return run_closed_loop(config, column, models, sc);
}

void write_trajectory_csv(const std::filesystem::path& path, const RunMetrics& metrics) {
    CsvTable t;
    std::vector<double> ts, u, yt, ym, lo, hi, p, et;
    for (const StepLog& s : metrics.log) {
        ts.push_back(s.t);
        u.push_back(s.u);
        yt.push_back(s.y_true);
        ym.push_back(s.y_meas);
        lo.push_back(s.zone_lo);
        hi.push_back(s.zone_hi);
        p.push_back(s.precipitation);
        et.push_back(s.et0);
    }
    t.add_column("t_s", std::move(ts));
    t.add_column("u_mps", std::move(u));
    t.add_column("y_true", std::move(yt));
    t.add_column("y_meas", std::move(ym));
    t.add_column("zone_lo", std::move(lo));
    t.add_column("zone_hi", std::move(hi));
    t.add_column("P_mps", std::move(p));
    t.add_column("ET0_mps", std::move(et));
    write_csv(path, t);
}

std::vector<BatteryRow> scenario_battery(const std::vector<RunConfig>& configs, const SoilColumn& column,
                                         const ModelSet& models, std::size_t benchmark) {
    std::vector<BatteryRow> rows;
    for (const RunConfig& c : configs) {
        BatteryRow row;
        row.config = c;
        try {
            row.metrics = run_closed_loop(c, column, models);
        } catch (const std::exception& e) {
            row.metrics.label = c.label;
            row.metrics.failed = true;
            row.metrics.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    if (benchmark < rows.size()) {
        const RunMetrics& b = rows[benchmark].metrics;
        for (BatteryRow& r : rows) {
            r.irrigation_diff_pct = b.irrigation_mm > 0.0
                                        ? 100.0 * (r.metrics.irrigation_mm - b.irrigation_mm) / b.irrigation_mm
                                        : 0.0;
            r.violation_diff_pct = b.zone_violation > 0.0
                                       ? 100.0 * (r.metrics.zone_violation - b.zone_violation) / b.zone_violation
                                       : 0.0;
        }
    }
    return rows;
}

void write_battery_csv(const std::filesystem::path& path, const std::vector<BatteryRow>& rows) {
    std::vector<std::vector<std::string>> cells;
    for (const BatteryRow& r : rows) {
        const RunConfig& c = r.config;
        cells.push_back({c.label, to_string(c.controller), format_double(c.zone.mu, 6),
                         format_double(c.zone.y_lo_term, 6), format_double(c.zone.y_hi_term, 6),
                         format_double(c.noise.process_frac, 6), format_double(c.noise.measurement_frac, 6),
                         to_string(c.scenario.kind), format_double(r.metrics.irrigation_mm, 10),
                         format_double(r.metrics.zone_violation, 10), format_double(r.irrigation_diff_pct, 6),
                         format_double(r.violation_diff_pct, 6), format_double(r.metrics.mean_solve_seconds, 6),
                         r.metrics.failed ? "1" : "0", std::to_string(c.noise.seed), r.config_hash});
    }
    write_text_csv(path,
                   {"label", "controller", "mu", "zone_term_lo", "zone_term_hi", "process_noise",
                    "measurement_noise", "scenario", "I_T_mm", "zone_violation", "I_T_diff_pct",
                    "violation_diff_pct", "mean_solve_s", "failed", "seed", "config_hash"},
                   cells);
}

}  // namespace irriloop
