/**
 * @file surrogate.hpp
 * @brief One-step output predictors built from trained networks: the range-specialized
 *        sub-models, the two-layer aggregate and the single-LSTM benchmark, with
 *        autoregressive rollout and NRMSE validation.
 *
 * Histories are p x 2 matrices of unscaled rows (u [m/s], y [m3/m3]) for consecutive
 * samples. The last row pairs the most recent output y(t) with the input applied over
 * [t, t + dt), and the prediction is y(t + 1).
 */
#pragma once

#include "irriloop/excitation.hpp"
#include "irriloop/mismatch.hpp"
#include "irriloop/neuralnet.hpp"

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace irriloop {

struct OperatingRange {
    double lo{kOutputRangeLo};
    double hi{kOutputRangeHi};

    bool contains(double y) const { return y >= lo && y <= hi; }
};

inline constexpr std::array<OperatingRange, 3> kSubModelRanges{
    {{0.12, 0.27}, {0.21, 0.32}, {0.29, 0.40}}};

/// Physical clipping window for predictions (theta_r, theta_s of the default soil).
struct OutputBounds {
    double lo{0.065};
    double hi{0.41};
};

struct Prediction {
    double y{0.0};
    bool clipped{false};
    bool out_of_range{false};  // an output in the history lies outside the scaler range
};

/// A model mapping a history window to the next output.
class OneStepModel {
public:
    virtual ~OneStepModel() = default;

    virtual int window() const = 0;
    virtual std::string name() const = 0;

    /// Unclipped predictions for a batch of unscaled histories (one 2 x B matrix per row).
    virtual Eigen::RowVectorXd predict_batch(const Batch& histories) const = 0;

    /// Unclipped prediction and its gradient with respect to the unscaled history.
    virtual double predict_with_gradient(const Eigen::MatrixXd& history,
                                         Eigen::MatrixXd& gradient) const = 0;

    double predict_raw(const Eigen::MatrixXd& history) const;

    OutputBounds bounds;
};

/// One network with its own input scaling (used for M1-M3 and the benchmark LSTM).
class LstmModel : public OneStepModel {
public:
    LstmModel() = default;
    LstmModel(std::string name, Network net, ScalingSpec scaler, OperatingRange range = {});

    int window() const override { return net_.spec().window; }
    std::string name() const override { return name_; }
    Eigen::RowVectorXd predict_batch(const Batch& histories) const override;
    double predict_with_gradient(const Eigen::MatrixXd& history,
                                 Eigen::MatrixXd& gradient) const override;

    /// Scaled outputs for a batch of unscaled histories.
    Eigen::RowVectorXd predict_scaled(const Batch& histories) const;

    const Network& network() const { return net_; }
    const ScalingSpec& scaler() const { return scaler_; }
    const OperatingRange& range() const { return range_; }

    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    static LstmModel load(const std::filesystem::path& path);

private:
    std::string name_;
    Network net_;
    ScalingSpec scaler_;
    OperatingRange range_;
};

/// Sub-models M1-M3 whose scaled predictions feed a dense aggregator.
class TwoLayerSurrogate : public OneStepModel {
public:
    TwoLayerSurrogate() = default;
    TwoLayerSurrogate(std::vector<LstmModel> bank, Network aggregator, AffineMap y_scale);

    int window() const override;
    std::string name() const override { return "two_layer"; }
    Eigen::RowVectorXd predict_batch(const Batch& histories) const override;
    double predict_with_gradient(const Eigen::MatrixXd& history,
                                 Eigen::MatrixXd& gradient) const override;

    /// Scaled sub-model outputs, one row per sub-model.
    Eigen::MatrixXd bank_outputs(const Batch& histories) const;

    const std::vector<LstmModel>& bank() const { return bank_; }
    const Network& aggregator() const { return aggregator_; }
    const AffineMap& y_scale() const { return y_scale_; }

    /// Writes m1.json, m2.json, m3.json and agg.json into a model directory.
    void save(const std::filesystem::path& dir) const;
    /// Loads m1.json, m2.json, m3.json and agg.json from a model directory.
    static TwoLayerSurrogate load(const std::filesystem::path& dir);

private:
    std::vector<LstmModel> bank_;
    Network aggregator_;
    AffineMap y_scale_;
};

/// Default architectures.
NetworkSpec sub_model_spec(int lstm_layers, int units = 32, int window = 20);
NetworkSpec aggregator_spec(int units = 16, int bank_size = 3);
NetworkSpec baseline_spec(int units = 32, int window = 20);

/// Largest unit count for which baseline_spec(units) has at most `budget` parameters.
int parameter_matched_units(std::size_t budget, int window = 20);

/// Windows of `data` whose most recent clean output lies inside `range`.
SequenceSet windows_in_range(const Dataset& data, std::size_t p, const ScalingSpec& scaler,
                             const OperatingRange& range);

/// Alternates the samples of both sets; each set keeps its own order.
SequenceSet interleave(const SequenceSet& a, const SequenceSet& b);

/// Trains a single scaled network on a dataset.
LstmModel train_lstm_model(const std::string& name, const NetworkSpec& spec, const Dataset& data,
                           const ScalingSpec& scaler, const TrainConfig& config,
                           OperatingRange range = {}, TrainResult* history = nullptr);
LstmModel train_lstm_model(const std::string& name, const NetworkSpec& spec, const SequenceSet& set,
                           const ScalingSpec& scaler, const TrainConfig& config,
                           OperatingRange range = {}, TrainResult* history = nullptr);

/// Aggregator training set: frozen sub-model outputs for every window of `data`.
SequenceSet aggregator_set(const std::vector<LstmModel>& bank, const Dataset& data,
                           const AffineMap& y_scale, std::size_t p);

Network train_aggregator(const std::vector<LstmModel>& bank, const Dataset& data,
                         const AffineMap& y_scale, const NetworkSpec& spec,
                         const TrainConfig& config, TrainResult* history = nullptr);

/// Clips into the physical bounds and flags histories outside [0.12, 0.40].
Prediction predict_one_step(const OneStepModel& model, const Eigen::MatrixXd& history);

struct RolloutResult {
    std::vector<double> predictions;  // after correction (if any), clipped
    std::vector<double> raw;          // model outputs before correction, clipped
    int clip_events{0};
    bool truth_feedback{false};       // never set: rollouts feed back their own predictions
};

enum class FeedbackMode { corrected, raw };

struct RolloutOptions {
    CorrectionState* correction{nullptr};
    const std::vector<double>* truth{nullptr};  // y(t + 1 .. t + N), drives correction updates
    FeedbackMode feedback{FeedbackMode::corrected};
};

/// Autoregressive N-step prediction. future_u[j] is the input over [t + j, t + j + 1); it
/// replaces the input column of the history's final row for j = 0.
RolloutResult rollout(const OneStepModel& model, const Eigen::MatrixXd& history,
                      const std::vector<double>& future_u, int n_steps,
                      const RolloutOptions& options = {});

/// History window ending at sample t (inputs u[t - p + 1 .. t], outputs y_noisy[...]).
Eigen::MatrixXd history_at(const Dataset& data, std::size_t t, int p);

/// k-step predictions from every admissible start: entry (s, k - 1) predicts y(t + k)
/// with t = s + p - 1, using the dataset's noisy outputs as the initial window.
Eigen::MatrixXd multi_step_predictions(const OneStepModel& model, const Dataset& data, int n_steps,
                                       int* clip_events = nullptr);

/// RMSE normalized by the range of `actual`.
double nrmse(const std::vector<double>& actual, const std::vector<double>& predicted);

/// NRMSE of the k-step predictions against the clean outputs, for each k in `steps`.
std::vector<double> multi_step_nrmse(const OneStepModel& model, const Dataset& data,
                                     const std::vector<int>& steps);

struct NrmseTable {
    std::vector<int> steps;
    std::vector<std::string> models;
    std::vector<std::vector<double>> values;  // values[model][step]
};

/// Evaluates each model on its own validation dataset.
NrmseTable validate_models(const std::vector<const OneStepModel*>& models,
                           const std::vector<const Dataset*>& data, const std::vector<int>& steps);
void write_nrmse_table(const std::filesystem::path& path, const NrmseTable& table);

/// Improvement of `proposed` over `benchmark` in percent of the benchmark.
double percent_difference(double benchmark, double proposed);

}  // namespace irriloop
