/**
 * @file config.hpp
 * @brief Pipeline configuration: YAML sections for the soil, data generation, training,
 *        surrogate architecture, mismatch correction, controller and closed-loop run.
 */
#pragma once

#include "irriloop/closedloop.hpp"
#include "irriloop/excitation.hpp"
#include "irriloop/neuralnet.hpp"
#include "irriloop/soil_physics.hpp"
#include "irriloop/zmpc.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace irriloop {

/// Invalid or malformed configuration; the message carries a line reference when known.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SoilSection {
    SoilParams params;
    WaterStress stress;
    ConductivityMean mean{ConductivityMean::arithmetic};
};

struct GeometrySection {
    ColumnGeometry column;
    double max_substep{900.0};  // [s]
};

/// Dataset sizes are the full-scale defaults; `--scale k` divides every length by k.
struct ExcitationSection {
    std::array<std::vector<double>, 3> sub_levels;  // held levels per sub-model [m/s]
    std::array<double, 3> sub_start_output{0.195, 0.265, 0.345};
    int sub_min_hold{12};
    int sub_max_hold{72};
    std::size_t sub_length{30000};
    std::size_t sub_validation_length{8000};

    std::vector<double> agg_levels;  // impulse amplitudes [m/s]
    int agg_min_hold{6};
    int agg_max_hold{48};
    std::size_t agg_length{100000};
    std::size_t impulse_length{120000};  // impulse run mined for in-range sub-model windows
    std::size_t validation_length{20000};

    double noise_frac{0.1};
    double validation_noise_frac{0.2};
    NoiseKind noise_kind{NoiseKind::uniform};
    double h0{-0.2};          // initial potential of the aggregator and validation runs [m]
    double et0_peak{5e-8};    // background diurnal ET0 [m/s]
    double u_scale{6e-6};     // input scaling bound shared by every network [m/s]

    ExcitationSection();
    void validate() const;
};

struct TrainSection {
    TrainConfig sub;
    TrainConfig agg;
    TrainConfig baseline;

    void validate() const;
};

struct SurrogateSection {
    int window{20};
    int units{32};
    int m3_layers{2};
    int agg_units{16};
    int baseline_units{0};  // 0 matches the parameter count of the two-layer model

    void validate() const;
};

struct MismatchSection {
    ParameterBox a{0.8, 1.5};
    ParameterBox b{-0.2, 0.3};
    std::vector<int> bias_frequencies{1, 2, 5, 10, 20};
    std::vector<int> linear_frequencies{2, 5, 10, 20};

    void validate() const;
};

struct RunSection {
    RunConfig run;
    bool benchmark{false};        // reference row of a battery
    std::filesystem::path models;  // trained model directory; empty uses <out>/models
};

struct PipelineConfig {
    SoilSection soil;
    GeometrySection geometry;
    ExcitationSection excitation;
    TrainSection train;
    SurrogateSection surrogate;
    MismatchSection mismatch;
    RunSection run;  // the zmpc section fills run.run.zone and run.run.zmpc

    SoilColumn make_column() const;
    void validate() const;
};

/// Parses YAML text. Every section must be present; keys are optional and unknown keys
/// are rejected. Relative paths resolve against `base_dir`.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Serializes every key so that parse_config(dump_config(c)) reproduces c.
std::string dump_config(const PipelineConfig& config);

/// 64-bit FNV-1a of the canonical dump, as 16 hex digits.
std::string config_hash(const PipelineConfig& config);

/// Documentation of every key: "section.key  default  description" lines.
std::string config_reference();

}  // namespace irriloop
