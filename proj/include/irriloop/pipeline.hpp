/**
 * @file pipeline.hpp
 * @brief End-to-end commands behind the CLI: dataset generation, training, validation,
 *        correction evaluation, closed-loop runs, batteries and reports.
 *
 * Every command reads a PipelineConfig, writes its outputs below an output directory and
 * leaves a JSON manifest next to them.
 */
#pragma once

#include "irriloop/closedloop.hpp"
#include "irriloop/config.hpp"
#include "irriloop/surrogate.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace irriloop {

inline constexpr const char* kToolVersion = "1.0.0";

/// A required input (dataset, model, battery output) is absent.
class MissingInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunManifest {
    std::string command;
    std::string config_hash;
    std::uint64_t seed{0};
    int scale{1};
    std::vector<std::filesystem::path> artifacts;
    std::string tool_version{kToolVersion};
    std::string started;   // UTC, ISO 8601
    std::string finished;

    void write(const std::filesystem::path& path) const;
};

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

struct CommandContext {
    PipelineConfig config;
    std::uint64_t seed{0};
    int scale{1};
    std::filesystem::path out{"out"};

    std::filesystem::path data_dir() const { return out / "data"; }
    std::filesystem::path models_dir() const;
};

/// Plant and background weather shared by every open-loop run.
SimulationSetup make_setup(const PipelineConfig& config, double h0);

struct DatasetBundle {
    std::array<Dataset, 3> sub;             // held-level runs, one per sub-model
    std::array<Dataset, 3> sub_validation;  // held-level validation runs
    Dataset impulse;                        // mined for in-range sub-model windows
    Dataset agg;
    Dataset validation;                     // shared full-range validation set
};

inline constexpr std::array<const char*, 3> kSubModelNames{"m1", "m2", "m3"};

/// Simulates every dataset; lengths are divided by `scale`.
DatasetBundle generate_datasets(const PipelineConfig& config, std::uint64_t seed, int scale);

/// Writes the bundle as CSV files with metadata sidecars; returns the written CSV paths.
std::vector<std::filesystem::path> save_datasets(const std::filesystem::path& dir, const DatasetBundle& bundle,
                                                 const PipelineConfig& config, std::uint64_t seed, int scale);
DatasetBundle load_datasets(const std::filesystem::path& dir);

ScalingSpec pipeline_scaler(const PipelineConfig& config);

/// Training set of sub-model m: its held-level windows merged with the impulse windows
/// whose latest output lies in the sub-model's range.
SequenceSet sub_model_set(const PipelineConfig& config, int m, const DatasetBundle& data);

LstmModel train_sub_model(const PipelineConfig& config, int m, const DatasetBundle& data, std::uint64_t seed,
                          TrainResult* history = nullptr);
Network train_aggregator_model(const PipelineConfig& config, const std::vector<LstmModel>& bank,
                               const DatasetBundle& data, std::uint64_t seed, TrainResult* history = nullptr);
/// Width of the single-LSTM benchmark: configured, or matched to the two-layer parameter count.
int baseline_units(const PipelineConfig& config);
LstmModel train_baseline_model(const PipelineConfig& config, const DatasetBundle& data, std::uint64_t seed,
                               TrainResult* history = nullptr);

/// Models found in a model directory; absent ones stay empty.
struct LoadedModels {
    std::array<std::optional<LstmModel>, 3> sub;
    std::optional<TwoLayerSurrogate> two_layer;
    std::optional<LstmModel> baseline;

    ModelSet model_set() const;
};

LoadedModels load_models(const std::filesystem::path& dir);

NrmseTable validation_table(const LoadedModels& models, const DatasetBundle& data, const std::vector<int>& steps);

struct CorrectionRow {
    CorrectionKind kind;
    int f;
    double error;     // mean absolute N-step error
    double diff_pct;  // improvement over no correction
};

std::vector<CorrectionRow> correction_table(const PipelineConfig& config, const OneStepModel& model,
                                            const Dataset& data);
void write_correction_csv(const std::filesystem::path& path, const std::vector<CorrectionRow>& rows);

// Commands. Each returns the paths it wrote.
std::vector<std::filesystem::path> cmd_datagen(const CommandContext& ctx);
/// which is one of m1, m2, m3, agg, baseline.
std::vector<std::filesystem::path> cmd_train(const CommandContext& ctx, const std::string& which);
std::vector<std::filesystem::path> cmd_validate(const CommandContext& ctx);
std::vector<std::filesystem::path> cmd_correct_eval(const CommandContext& ctx);
std::vector<std::filesystem::path> cmd_zmpc_run(const CommandContext& ctx);
/// Runs every *.yaml config of `configs_dir` (sorted by name) and writes one CSV.
std::vector<std::filesystem::path> cmd_battery(const std::filesystem::path& configs_dir,
                                               const std::filesystem::path& report_csv,
                                               const std::optional<std::uint64_t>& seed,
                                               const std::filesystem::path& models_dir);
/// Summarizes nrmse.csv, correction.csv and battery CSVs found in `in_dir`.
std::vector<std::filesystem::path> cmd_report(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir);

void write_metrics_csv(const std::filesystem::path& path, const RunMetrics& metrics);

}  // namespace irriloop
