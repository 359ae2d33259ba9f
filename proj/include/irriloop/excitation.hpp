/**
 * @file excitation.hpp
 * @brief Training-data generation: pseudorandom excitation, open-loop simulation,
 *        output noise, scaling and windowing into network inputs.
 */
#pragma once

#include "irriloop/neuralnet.hpp"
#include "irriloop/soil_physics.hpp"
#include "irriloop/weather.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace irriloop {

enum class PrsMode { held_levels, impulse };

struct PrsSpec {
    std::vector<double> levels;  // irrigation rates [m/s]
    int min_hold{1};             // [samples]
    int max_hold{1};
    std::size_t length{0};
    std::uint64_t seed{0};
    PrsMode mode{PrsMode::held_levels};

    void validate() const;
};

/// Multi-level pseudorandom signal. In impulse mode each drawn level occupies a single
/// sample and the rest of the hold is zero.
std::vector<double> gen_prs(const PrsSpec& spec);

enum class NoiseKind { uniform, gaussian };

struct Dataset {
    std::vector<double> u;        // applied over [t_k, t_k + dt) [m/s]
    std::vector<double> y_clean;  // root-zone water content at t_k
    std::vector<double> y_noisy;
    double dt{7200.0};
    double y_min{0.0};
    double y_max{0.0};

    std::size_t size() const { return u.size(); }
    void validate() const;
};

struct SimulationSetup {
    SoilColumn column;
    SoilColumnState initial;
    WeatherSeries weather;  // background weather, indexed cyclically
    double dt{7200.0};
};

/// Drives the plant open loop with `signal` and adds bounded output noise with
/// epsilon_max = noise_frac * (y_max - y_min) of the clean trajectory.
Dataset simulate_dataset(const std::vector<double>& signal, const SimulationSetup& setup,
                         double noise_frac, std::uint64_t seed,
                         NoiseKind kind = NoiseKind::uniform);

/// Re-draws the output noise of an existing dataset.
Dataset with_noise(const Dataset& clean, double noise_frac, std::uint64_t seed,
                   NoiseKind kind = NoiseKind::uniform);

/// Per-channel affine map: scaled = (x - offset) * gain.
struct AffineMap {
    double offset{0.0};
    double gain{1.0};

    double apply(double x) const { return (x - offset) * gain; }
    double invert(double s) const { return s / gain + offset; }
};

struct ScalingSpec {
    AffineMap u;
    AffineMap y;

    void validate() const;
};

inline constexpr double kOutputRangeLo = 0.12;
inline constexpr double kOutputRangeHi = 0.40;
inline constexpr double kScaledOutputBound = 0.9;

/// u -> u / u_max, y in [y_lo, y_hi] -> [-0.9, 0.9].
ScalingSpec fit_scaler(double u_max, double y_lo = kOutputRangeLo, double y_hi = kOutputRangeHi);
/// Uses the largest input of the dataset as u_max.
ScalingSpec fit_scaler(const Dataset& data, double y_lo = kOutputRangeLo,
                       double y_hi = kOutputRangeHi);

/// Windows of p consecutive scaled (u, y_noisy) rows with the next scaled y_noisy as target.
SequenceSet window(const Dataset& data, std::size_t p, const ScalingSpec& scaler);

/// Largest absolute scaled value among inputs and targets.
double max_abs_scaled(const SequenceSet& set);

/// Constant irrigation rate whose long-run root-zone output under the background weather
/// equals `target`, found by bisection on simulated runs of `days` days.
double calibrate_input_for_output(const SimulationSetup& setup, double target, int days = 30);

/// One calibrated input per target output, the targets spread evenly over [y_lo, y_hi].
std::vector<double> calibrate_levels(const SimulationSetup& setup, double y_lo, double y_hi,
                                     int count, int days = 30);

struct DatasetMeta {
    std::uint64_t seed{0};
    PrsSpec spec;
    double noise_frac{0.0};
    ScalingSpec scaler;
};

/// CSV `t_s,u_mps,y_clean,y_noisy` plus a `<name>.meta.json` sidecar.
void save_dataset(const std::filesystem::path& csv_path, const Dataset& data,
                  const DatasetMeta& meta);
Dataset load_dataset(const std::filesystem::path& csv_path);

std::string to_string(PrsMode mode);
PrsMode prs_mode_from_string(const std::string& s);

}  // namespace irriloop
