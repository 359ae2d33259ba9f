/**
 * @file neuralnet.hpp
 * @brief Small sequence-regression network engine: stacked LSTM layers followed by
 *        dense layers, trained on mean squared error with BPTT and Adam.
 *
 * All parameters live in one flat vector so that optimizers and gradient checks can
 * treat the network uniformly. Batches are time-major: one (channels x batch) matrix per
 * time step.
 */
#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace irriloop {

enum class Activation { identity, sigmoid, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct LstmSpec {
    int units{32};
    Activation activation{Activation::tanh};  // candidate and cell-output activation
};

struct DenseSpec {
    int units{1};
    Activation activation{Activation::tanh};
};

struct NetworkSpec {
    int window{20};
    int channels{2};
    std::vector<LstmSpec> lstm;
    std::vector<DenseSpec> dense;

    /// Width of the vector the first dense layer consumes.
    int dense_input_size() const;
    void validate() const;
};

/// Supervised sequence data: each input is window x channels, each target a scalar.
struct SequenceSet {
    int window{0};
    int channels{0};
    std::vector<Eigen::MatrixXd> inputs;
    std::vector<double> targets;

    std::size_t size() const { return inputs.size(); }
};

using Batch = std::vector<Eigen::MatrixXd>;  // per time step: channels x batch

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class Network {
public:
    /// Cached activations of one forward pass, consumed by backward().
    struct Tape {
        struct LstmStep {
            Eigen::MatrixXd gates;  // 4H x B, activated: input, forget, candidate, output
            Eigen::MatrixXd cell;
            Eigen::MatrixXd cell_act;
            Eigen::MatrixXd hidden;
        };
        std::vector<Batch> lstm_inputs;               // per layer, per step
        std::vector<std::vector<LstmStep>> lstm_steps;
        std::vector<Eigen::MatrixXd> dense_inputs;
        std::vector<Eigen::MatrixXd> dense_outputs;
        Eigen::RowVectorXd output;
    };

    Network() = default;
    /// All parameters zero.
    explicit Network(NetworkSpec spec);
    /// Uniform fan-in scaled initialization; LSTM forget-gate biases start at 1.
    static Network initialized(const NetworkSpec& spec, std::uint64_t seed);

    const NetworkSpec& spec() const { return spec_; }
    const Eigen::VectorXd& parameters() const { return params_; }
    Eigen::VectorXd& parameters() { return params_; }
    Eigen::Index parameter_count() const { return params_.size(); }

    double forward(const Eigen::MatrixXd& input) const;
    Eigen::RowVectorXd forward(const Batch& batch) const;
    void forward(const Batch& batch, Tape& tape) const;

    /// Backpropagates d(loss)/d(output). Either output pointer may be null; parameter
    /// gradients are accumulated into `d_params`, input gradients overwrite `d_input`.
    void backward(const Tape& tape, const Eigen::RowVectorXd& d_output,
                  Eigen::VectorXd* d_params, Batch* d_input) const;

    /// Gradient of the (per-sample) output with respect to a single input window.
    Eigen::MatrixXd input_gradient(const Eigen::MatrixXd& input, double* output = nullptr) const;

private:
    struct LstmOffsets {
        Eigen::Index w, u, b;
        int in, units;
    };
    struct DenseOffsets {
        Eigen::Index w, b;
        int in, out;
    };

    void layout();
    void check_batch(const Batch& batch) const;

    NetworkSpec spec_;
    std::vector<LstmOffsets> lstm_off_;
    std::vector<DenseOffsets> dense_off_;
    Eigen::VectorXd params_;
};

/// Packs sample rows of a SequenceSet into a time-major batch.
Batch make_batch(const SequenceSet& set, const std::vector<std::size_t>& indices);
Batch make_batch(const Eigen::MatrixXd& input);

/// Mean squared error of the batch and its gradient (added to `grad`).
double mse_loss_and_gradient(const Network& net, const Batch& batch,
                             const Eigen::RowVectorXd& targets, Eigen::VectorXd& grad,
                             Network::Tape& tape);

double mse(const Network& net, const SequenceSet& set, std::size_t chunk = 512);

struct TrainConfig {
    int epochs{200};
    int batch_size{64};
    double learning_rate{1e-3};
    double beta1{0.9};
    double beta2{0.999};
    double epsilon{1e-8};
    double validation_split{0.1};
    std::uint64_t seed{1};
    int patience{0};  // stop after this many epochs without improvement; 0 disables

    void validate() const;
};

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    Network network;              // parameters at the best validation loss
    std::vector<double> train_loss;  // index 0 holds the loss before any update
    std::vector<double> val_loss;
    int best_epoch{0};
};

/// Adam on shuffled mini-batches. The last `validation_split` fraction of the samples
/// (in order) is held out for model selection.
TrainResult train(const NetworkSpec& spec, const SequenceSet& data, const TrainConfig& config);
/// Continues from an existing network.
TrainResult train(const Network& initial, const SequenceSet& data, const TrainConfig& config);

class CorruptModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ModelVersionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kModelFormatVersion = 1;

struct ModelFile {
    Network network;
    nlohmann::json metadata;
};

void save_model(const std::filesystem::path& path, const Network& net,
                const nlohmann::json& metadata = nlohmann::json::object());
ModelFile load_model(const std::filesystem::path& path);

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

}  // namespace irriloop
