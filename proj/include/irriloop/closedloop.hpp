/**
 * @file closedloop.hpp
 * @brief Closed-loop simulation of the soil column under receding-horizon control, with
 *        process and measurement noise, forecast weather and the irrigation and
 *        zone-violation metrics.
 */
#pragma once

#include "irriloop/mismatch.hpp"
#include "irriloop/soil_physics.hpp"
#include "irriloop/surrogate.hpp"
#include "irriloop/weather.hpp"
#include "irriloop/zmpc.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace irriloop {

struct NoiseSpec {
    double process_frac{0.0};      // multiplicative perturbation of the root-node water content
    double measurement_frac{0.0};  // multiplicative perturbation of the reported output
    std::uint64_t seed{0};

    void validate() const;
};

struct WeatherScenario {
    WeatherSeries truth;
    WeatherSeries forecast;
};

/// Each forecast rate is the true rate times a uniform factor in [1 - e, 1 + e], clipped at 0.
WeatherSeries make_forecast(const WeatherSeries& truth, double error_frac, std::uint64_t seed);

enum class ScenarioKind { calm, dry, rain };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& s);

struct ScenarioSpec {
    ScenarioKind kind{ScenarioKind::dry};
    double et0_peak{5e-8};     // [m/s]
    double rain_peak{6e-7};    // [m/s]
    double kc{1.0};
    double forecast_error{0.2};
    std::uint64_t seed{0};
};

/// Weather covering `length` steps (N_sim + N).
WeatherScenario make_scenario(const ScenarioSpec& spec, std::size_t length, double dt = 7200.0);

/// The same scenario with every precipitation rate set to zero.
WeatherScenario without_rain(const WeatherScenario& scenario);

enum class ControllerModel { richards, single_lstm, two_layer };
enum class PlantModel { richards, surrogate };

std::string to_string(ControllerModel m);
ControllerModel controller_model_from_string(const std::string& s);
std::string to_string(PlantModel m);
PlantModel plant_model_from_string(const std::string& s);

struct RunConfig {
    std::string label{"run"};
    int n_sim{60};
    double dt{7200.0};
    double h0{-0.2};  // uniform initial potential [m]
    PlantModel plant{PlantModel::richards};
    ControllerModel controller{ControllerModel::two_layer};
    CorrectionKind correction{CorrectionKind::single_bias};
    int correction_f{2};
    ZoneSpec zone;
    ZmpcConfig zmpc;
    bool warm_start{true};
    ScenarioSpec scenario;
    NoiseSpec noise;

    void validate() const;
};

struct StepLog {
    double t{0.0};
    double u{0.0};
    double y_true{0.0};
    double y_meas{0.0};
    double zone_lo{0.0};
    double zone_hi{0.0};
    double precipitation{0.0};
    double et0{0.0};
    double objective{0.0};
    int iterations{0};
    double solve_seconds{0.0};
};

struct RunMetrics {
    std::string label;
    double irrigation_mm{0.0};
    double zone_violation{0.0};
    double mean_solve_seconds{0.0};
    double mass_balance_error{0.0};  // worst relative plant-side imbalance over the run
    bool failed{false};
    std::string error;
    std::vector<StepLog> log;
    std::vector<double> y_after;  // true output after each applied input
};

/// I_T = sum u * dt * 1000 [mm].
double total_irrigation(const std::vector<double>& u, double dt);

/// Mean distance of the outputs to [lo, hi].
double zone_violation(const std::vector<double>& y, double lo = 0.18, double hi = 0.23);

/// Models available to the controllers; only the one matching RunConfig::controller (and the
/// plant, when it is a surrogate) must be set.
struct ModelSet {
    const OneStepModel* single_lstm{nullptr};
    const OneStepModel* two_layer{nullptr};
};

/// Runs one closed-loop experiment. Integration failures end the run early with `failed`
/// set and the partial log kept.
RunMetrics run_closed_loop(const RunConfig& config, const SoilColumn& column, const ModelSet& models,
                           const WeatherScenario& scenario);

/// Convenience overload that builds the weather from config.scenario.
RunMetrics run_closed_loop(const RunConfig& config, const SoilColumn& column, const ModelSet& models);

void write_trajectory_csv(const std::filesystem::path& path, const RunMetrics& metrics);

struct BatteryRow {
    RunConfig config;
    RunMetrics metrics;
    double irrigation_diff_pct{0.0};  // relative to the benchmark row
    double violation_diff_pct{0.0};
    std::string config_hash;  // of the pipeline config that produced the row, if any
};

/// Runs every config; each row is compared with row `benchmark`. Failed runs are kept.
std::vector<BatteryRow> scenario_battery(const std::vector<RunConfig>& configs, const SoilColumn& column,
                                         const ModelSet& models, std::size_t benchmark = 0);

/// Columns label,controller,mu,zone_term_lo,zone_term_hi,process_noise,measurement_noise,
/// scenario,I_T_mm,zone_violation,I_T_diff_pct,violation_diff_pct,mean_solve_s,failed,seed,
/// config_hash.
void write_battery_csv(const std::filesystem::path& path, const std::vector<BatteryRow>& rows);

}  // namespace irriloop
