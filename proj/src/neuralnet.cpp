/**
 * @file neuralnet.cpp
 * @brief LSTM/dense forward and backward passes, Adam training, model files.
 */

#include "irriloop/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace irriloop {

using Eigen::Index;
using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {

template <typename Derived>
void activate_inplace(Activation a, Eigen::MatrixBase<Derived>&& m) {
    switch (a) {
        case Activation::identity:
            break;
        case Activation::sigmoid:
            m = ((-m.array()).exp() + 1.0).inverse().matrix();
            break;
        case Activation::tanh:
            // 1 - 2 / (exp(2x) + 1) keeps the vectorized exp path and saturates cleanly.
            m = (1.0 - 2.0 / ((2.0 * m.array()).exp() + 1.0)).matrix();
            break;
    }
}

template <typename Derived>
void activate_inplace(Activation a, Eigen::MatrixBase<Derived>& m) {
    activate_inplace(a, std::move(m));
}

/// Derivative expressed through the activated value.
MatrixXd activation_derivative(Activation a, const MatrixXd& y) {
    switch (a) {
        case Activation::identity:
            return MatrixXd::Ones(y.rows(), y.cols());
        case Activation::sigmoid:
            return (y.array() * (1.0 - y.array())).matrix();
        case Activation::tanh:
            return (1.0 - y.array().square()).matrix();
    }
    return MatrixXd::Ones(y.rows(), y.cols());
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
    }
    return "identity";
}

Activation activation_from_string(const std::string& s) {
    if (s == "identity" || s == "linear") return Activation::identity;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation `" + s + "`");
}

int NetworkSpec::dense_input_size() const {
    return lstm.empty() ? window * channels : lstm.back().units;
}

void NetworkSpec::validate() const {
    if (window < 1 || channels < 1) throw ShapeError("network: window and channels must be positive");
    if (dense.empty()) throw ShapeError("network: at least one dense layer is required");
    for (const auto& l : lstm) {
        if (l.units < 1) throw ShapeError("network: LSTM units must be positive");
    }
    for (const auto& d : dense) {
        if (d.units < 1) throw ShapeError("network: dense units must be positive");
    }
    if (dense.back().units != 1) throw ShapeError("network: final dense layer must have one unit");
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    layout();
}

void Network::layout() {
    Index offset = 0;
    lstm_off_.clear();
    dense_off_.clear();
    int in = spec_.channels;
    for (const auto& l : spec_.lstm) {
        LstmOffsets o{};
        o.in = in;
        o.units = l.units;
        o.w = offset;
        offset += Index(4) * l.units * in;
        o.u = offset;
        offset += Index(4) * l.units * l.units;
        o.b = offset;
        offset += Index(4) * l.units;
        lstm_off_.push_back(o);
        in = l.units;
    }
    in = spec_.dense_input_size();
    for (const auto& d : spec_.dense) {
        DenseOffsets o{};
        o.in = in;
        o.out = d.units;
        o.w = offset;
        offset += Index(d.units) * in;
        o.b = offset;
        offset += d.units;
        dense_off_.push_back(o);
        in = d.units;
    }
    params_ = VectorXd::Zero(offset);
}

Network Network::initialized(const NetworkSpec& spec, std::uint64_t seed) {
    Network net(spec);
    std::mt19937_64 rng(seed);
    auto fill = [&](Index start, Index count, double limit) {
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Index i = 0; i < count; ++i) net.params_[start + i] = dist(rng);
    };
    for (const auto& o : net.lstm_off_) {
        const double limit = 1.0 / std::sqrt(static_cast<double>(o.units));
        fill(o.w, Index(4) * o.units * o.in, limit);
        fill(o.u, Index(4) * o.units * o.units, limit);
        net.params_.segment(o.b + o.units, o.units).setOnes();
    }
    for (const auto& o : net.dense_off_) {
        fill(o.w, Index(o.out) * o.in, 1.0 / std::sqrt(static_cast<double>(o.in)));
    }
    return net;
}

void Network::check_batch(const Batch& batch) const {
    if (batch.size() != static_cast<std::size_t>(spec_.window)) {
        std::ostringstream os;
        os << "network expects " << spec_.window << " time steps, got " << batch.size();
        throw ShapeError(os.str());
    }
    const Index cols = batch.front().cols();
    for (const auto& m : batch) {
        if (m.rows() != spec_.channels || m.cols() != cols) {
            std::ostringstream os;
            os << "network expects " << spec_.channels << " channels per step, got " << m.rows();
            throw ShapeError(os.str());
        }
    }
}

void Network::forward(const Batch& x, Tape& tape) const {
    check_batch(x);
    const Index batch = x.front().cols();
    const int steps = spec_.window;
    const std::size_t n_lstm = lstm_off_.size();
    tape.lstm_inputs.resize(n_lstm);
    tape.lstm_steps.resize(n_lstm);

    const Batch* input = &x;
    for (std::size_t l = 0; l < n_lstm; ++l) {
        const auto& o = lstm_off_[l];
        const Index h = o.units;
        const Activation act = spec_.lstm[l].activation;
        Map<const MatrixXd> w(params_.data() + o.w, 4 * h, o.in);
        Map<const MatrixXd> u(params_.data() + o.u, 4 * h, h);
        Map<const VectorXd> b(params_.data() + o.b, 4 * h);

        tape.lstm_inputs[l] = *input;
        auto& st = tape.lstm_steps[l];
        st.resize(static_cast<std::size_t>(steps));
        for (int t = 0; t < steps; ++t) {
            auto& s = st[t];
            s.gates.resize(4 * h, batch);
            s.gates.noalias() = w * tape.lstm_inputs[l][t];
            if (t > 0) s.gates.noalias() += u * st[t - 1].hidden;
            s.gates.colwise() += b;
            activate_inplace(Activation::sigmoid, s.gates.topRows(2 * h));
            activate_inplace(act, s.gates.middleRows(2 * h, h));
            activate_inplace(Activation::sigmoid, s.gates.bottomRows(h));
            s.cell = s.gates.topRows(h).cwiseProduct(s.gates.middleRows(2 * h, h));
            if (t > 0) s.cell += s.gates.middleRows(h, h).cwiseProduct(st[t - 1].cell);
            s.cell_act = s.cell;
            activate_inplace(act, s.cell_act);
            s.hidden = s.gates.bottomRows(h).cwiseProduct(s.cell_act);
        }
        if (l + 1 < n_lstm) {
            // The next layer's inputs are this layer's hidden states.
            Batch next(static_cast<std::size_t>(steps));
            for (int t = 0; t < steps; ++t) next[t] = st[t].hidden;
            tape.lstm_inputs[l + 1] = std::move(next);
            input = &tape.lstm_inputs[l + 1];
        }
    }

    MatrixXd a;
    if (n_lstm == 0) {
        a.resize(Index(steps) * spec_.channels, batch);
        for (int t = 0; t < steps; ++t) a.middleRows(Index(t) * spec_.channels, spec_.channels) = x[t];
    } else {
        a = tape.lstm_steps.back().back().hidden;
    }
    tape.dense_inputs.resize(dense_off_.size());
    tape.dense_outputs.resize(dense_off_.size());
    for (std::size_t d = 0; d < dense_off_.size(); ++d) {
        const auto& o = dense_off_[d];
        Map<const MatrixXd> w(params_.data() + o.w, o.out, o.in);
        Map<const VectorXd> b(params_.data() + o.b, o.out);
        tape.dense_inputs[d] = std::move(a);
        MatrixXd z = w * tape.dense_inputs[d];
        z.colwise() += b;
        activate_inplace(spec_.dense[d].activation, z);
        tape.dense_outputs[d] = z;
        a = std::move(z);
    }
    tape.output = a.row(0);
}

RowVectorXd Network::forward(const Batch& batch) const {
    Tape tape;
    forward(batch, tape);
    return tape.output;
}

double Network::forward(const MatrixXd& input) const {
    return forward(make_batch(input))(0);
}

void Network::backward(const Tape& tape, const RowVectorXd& d_output, VectorXd* d_params,
                       Batch* d_input) const {
    const Index batch = d_output.size();
    const int steps = spec_.window;
    if (d_params && d_params->size() != params_.size()) {
        throw ShapeError("backward: gradient vector has the wrong size");
    }

    MatrixXd delta = d_output;
    for (std::size_t d = dense_off_.size(); d-- > 0;) {
        const auto& o = dense_off_[d];
        Map<const MatrixXd> w(params_.data() + o.w, o.out, o.in);
        delta = delta.cwiseProduct(activation_derivative(spec_.dense[d].activation,
                                                         tape.dense_outputs[d]));
        if (d_params) {
            Map<MatrixXd> dw(d_params->data() + o.w, o.out, o.in);
            Map<VectorXd> db(d_params->data() + o.b, o.out);
            dw.noalias() += delta * tape.dense_inputs[d].transpose();
            db += delta.rowwise().sum();
        }
        delta = w.transpose() * delta;
    }

    if (lstm_off_.empty()) {
        if (d_input) {
            d_input->resize(static_cast<std::size_t>(steps));
            for (int t = 0; t < steps; ++t) {
                (*d_input)[t] = delta.middleRows(Index(t) * spec_.channels, spec_.channels);
            }
        }
        return;
    }

    // Gradient w.r.t. the hidden state of the current layer at each step. For the top
    // layer only the final step feeds the dense head.
    std::vector<MatrixXd> d_hidden;
    for (std::size_t l = lstm_off_.size(); l-- > 0;) {
        const auto& o = lstm_off_[l];
        const Index h = o.units;
        const Activation act = spec_.lstm[l].activation;
        Map<const MatrixXd> w(params_.data() + o.w, 4 * h, o.in);
        Map<const MatrixXd> u(params_.data() + o.u, 4 * h, h);
        const auto& st = tape.lstm_steps[l];
        const Batch& xin = tape.lstm_inputs[l];
        const bool top = (l + 1 == lstm_off_.size());
        const bool need_dx = (l > 0) || d_input != nullptr;

        std::vector<MatrixXd> d_x(need_dx ? static_cast<std::size_t>(steps) : 0);
        MatrixXd dh_next = MatrixXd::Zero(h, batch);
        MatrixXd dc_next = MatrixXd::Zero(h, batch);
        MatrixXd dz(4 * h, batch);

        for (int t = steps - 1; t >= 0; --t) {
            const auto& s = st[t];
            MatrixXd dh = dh_next;
            if (top) {
                if (t == steps - 1) dh += delta;
            } else {
                dh += d_hidden[t];
            }
            const auto gi = s.gates.topRows(h).array();
            const auto gf = s.gates.middleRows(h, h).array();
            const auto gg = s.gates.middleRows(2 * h, h).array();
            const auto go = s.gates.bottomRows(h).array();

            const MatrixXd d_o = dh.cwiseProduct(s.cell_act);
            MatrixXd dc = dc_next + dh.cwiseProduct(go.matrix())
                                        .cwiseProduct(activation_derivative(act, s.cell_act));
            dz.topRows(h) = (dc.array() * gg * gi * (1.0 - gi)).matrix();
            if (t > 0) {
                dz.middleRows(h, h) = (dc.array() * st[t - 1].cell.array() * gf * (1.0 - gf)).matrix();
            } else {
                dz.middleRows(h, h).setZero();
            }
            dz.middleRows(2 * h, h) =
                (dc.array() * gi).matrix().cwiseProduct(activation_derivative(act, s.gates.middleRows(2 * h, h)));
            dz.bottomRows(h) = (d_o.array() * go * (1.0 - go)).matrix();
            dc_next = (dc.array() * gf).matrix();

            if (d_params) {
                Map<MatrixXd> dw(d_params->data() + o.w, 4 * h, o.in);
                Map<MatrixXd> du(d_params->data() + o.u, 4 * h, h);
                Map<VectorXd> db(d_params->data() + o.b, 4 * h);
                dw.noalias() += dz * xin[t].transpose();
                if (t > 0) du.noalias() += dz * st[t - 1].hidden.transpose();
                db += dz.rowwise().sum();
            }
            if (need_dx) d_x[t].noalias() = w.transpose() * dz;
            dh_next.noalias() = u.transpose() * dz;
        }
        if (l > 0) {
            d_hidden = std::move(d_x);
        } else if (d_input) {
            *d_input = std::move(d_x);
        }
    }
}

MatrixXd Network::input_gradient(const MatrixXd& input, double* output) const {
    Tape tape;
    forward(make_batch(input), tape);
    if (output) *output = tape.output(0);
    Batch d_in;
    backward(tape, RowVectorXd::Ones(1), nullptr, &d_in);
    MatrixXd g(spec_.window, spec_.channels);
    for (int t = 0; t < spec_.window; ++t) g.row(t) = d_in[t].col(0).transpose();
    return g;
}

Batch make_batch(const SequenceSet& set, const std::vector<std::size_t>& indices) {
    Batch batch(static_cast<std::size_t>(set.window),
                MatrixXd(set.channels, static_cast<Index>(indices.size())));
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const MatrixXd& x = set.inputs[indices[b]];
        for (int t = 0; t < set.window; ++t) batch[t].col(static_cast<Index>(b)) = x.row(t).transpose();
    }
    return batch;
}

Batch make_batch(const MatrixXd& input) {
    Batch batch(static_cast<std::size_t>(input.rows()));
    for (Index t = 0; t < input.rows(); ++t) batch[t] = input.row(t).transpose();
    return batch;
}

double mse_loss_and_gradient(const Network& net, const Batch& batch, const RowVectorXd& targets,
                             VectorXd& grad, Network::Tape& tape) {
    net.forward(batch, tape);
    const RowVectorXd resid = tape.output - targets;
    const double n = static_cast<double>(targets.size());
    net.backward(tape, 2.0 * resid / n, &grad, nullptr);
    return resid.squaredNorm() / n;
}

double mse(const Network& net, const SequenceSet& set, std::size_t chunk) {
    if (set.size() == 0) return 0.0;
    double total = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < set.size(); start += chunk) {
        const std::size_t end = std::min(set.size(), start + chunk);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const RowVectorXd out = net.forward(make_batch(set, idx));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const double r = out(static_cast<Index>(i)) - set.targets[idx[i]];
            total += r * r;
        }
    }
    return total / static_cast<double>(set.size());
}

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1) throw std::invalid_argument("train: epochs and batch size must be positive");
    if (!(learning_rate > 0.0 && beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 &&
          epsilon > 0.0)) {
        throw std::invalid_argument("train: optimizer constants out of range");
    }
    if (!(validation_split >= 0.0 && validation_split <= 0.5)) {
        throw std::invalid_argument("train: validation_split must lie in [0, 0.5]");
    }
    if (patience < 0) throw std::invalid_argument("train: patience must be nonnegative");
}

TrainResult train(const NetworkSpec& spec, const SequenceSet& data, const TrainConfig& config) {
    return train(Network::initialized(spec, config.seed), data, config);
}

TrainResult train(const Network& initial, const SequenceSet& data, const TrainConfig& config) {
    config.validate();
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (data.window != initial.spec().window || data.channels != initial.spec().channels) {
        throw ShapeError("train: dataset shape does not match the network");
    }

    const std::size_t n = data.size();
    const auto n_val = static_cast<std::size_t>(std::floor(config.validation_split * n));
    const std::size_t n_train = n - n_val;
    if (n_train == 0) throw std::invalid_argument("train: no training samples after the split");

    SequenceSet train_set{data.window, data.channels, {}, {}};
    SequenceSet val_set{data.window, data.channels, {}, {}};
    train_set.inputs.assign(data.inputs.begin(), data.inputs.begin() + n_train);
    train_set.targets.assign(data.targets.begin(), data.targets.begin() + n_train);
    val_set.inputs.assign(data.inputs.begin() + n_train, data.inputs.end());
    val_set.targets.assign(data.targets.begin() + n_train, data.targets.end());
    const SequenceSet& select_set = n_val > 0 ? val_set : train_set;

    TrainResult result;
    result.network = initial;
    Network& net = result.network;
    VectorXd best = net.parameters();
    result.train_loss.push_back(mse(net, train_set));
    result.val_loss.push_back(mse(net, select_set));
    double best_loss = result.val_loss.back();

    VectorXd m = VectorXd::Zero(net.parameter_count());
    VectorXd v = VectorXd::Zero(net.parameter_count());
    VectorXd grad(net.parameter_count());
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    Network::Tape tape;
    std::vector<std::size_t> idx;
    long step = 0;
    int since_best = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n_train; start += config.batch_size) {
            const std::size_t end = std::min(n_train, start + config.batch_size);
            idx.assign(order.begin() + start, order.begin() + end);
            const Batch batch = make_batch(train_set, idx);
            RowVectorXd targets(static_cast<Index>(idx.size()));
            for (std::size_t i = 0; i < idx.size(); ++i) targets(static_cast<Index>(i)) = train_set.targets[idx[i]];
            grad.setZero();
            const double loss = mse_loss_and_gradient(net, batch, targets, grad, tape);
            if (!std::isfinite(loss) || !grad.allFinite()) {
                throw DivergenceError("training diverged at epoch " + std::to_string(epoch));
            }
            loss_sum += loss * static_cast<double>(idx.size());

            ++step;
            m = config.beta1 * m + (1.0 - config.beta1) * grad;
            v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseAbs2();
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            net.parameters().array() -=
                config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.epsilon);
        }
        result.train_loss.push_back(loss_sum / static_cast<double>(n_train));
        const double val = mse(net, select_set);
        if (!std::isfinite(val)) throw DivergenceError("validation loss is not finite at epoch " + std::to_string(epoch));
        result.val_loss.push_back(val);
        if (val < best_loss) {
            best_loss = val;
            best = net.parameters();
            result.best_epoch = epoch;
            since_best = 0;
        } else if (config.patience > 0 && ++since_best >= config.patience) {
            break;
        }
    }
    net.parameters() = best;
    return result;
}

nlohmann::json spec_to_json(const NetworkSpec& spec) {
    nlohmann::json j;
    j["window"] = spec.window;
    j["channels"] = spec.channels;
    j["lstm"] = nlohmann::json::array();
    for (const auto& l : spec.lstm) {
        j["lstm"].push_back({{"units", l.units}, {"activation", to_string(l.activation)}});
    }
    j["dense"] = nlohmann::json::array();
    for (const auto& d : spec.dense) {
        j["dense"].push_back({{"units", d.units}, {"activation", to_string(d.activation)}});
    }
    return j;
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.window = j.at("window").get<int>();
    spec.channels = j.at("channels").get<int>();
    for (const auto& l : j.at("lstm")) {
        spec.lstm.push_back({l.at("units").get<int>(),
                             activation_from_string(l.at("activation").get<std::string>())});
    }
    for (const auto& d : j.at("dense")) {
        spec.dense.push_back({d.at("units").get<int>(),
                              activation_from_string(d.at("activation").get<std::string>())});
    }
    return spec;
}

void save_model(const std::filesystem::path& path, const Network& net,
                const nlohmann::json& metadata) {
    nlohmann::json j;
    j["format"] = "irriloop-network";
    j["version"] = kModelFormatVersion;
    j["spec"] = spec_to_json(net.spec());
    j["metadata"] = metadata;
    std::vector<double> params(net.parameters().data(),
                               net.parameters().data() + net.parameter_count());
    j["parameters"] = params;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file " + path.string());
    out << j.dump(1) << '\n';
}

ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CorruptModelError("cannot open model file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptModelError(path.string() + ": " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "irriloop-network") {
            throw CorruptModelError(path.string() + ": not a network file");
        }
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion) {
            throw ModelVersionError(path.string() + ": format version " + std::to_string(version) +
                                    ", expected " + std::to_string(kModelFormatVersion));
        }
        ModelFile file;
        file.network = Network(spec_from_json(j.at("spec")));
        const auto params = j.at("parameters").get<std::vector<double>>();
        if (static_cast<Index>(params.size()) != file.network.parameter_count()) {
            throw CorruptModelError(path.string() + ": parameter count does not match the spec");
        }
        file.network.parameters() = Map<const VectorXd>(params.data(), static_cast<Index>(params.size()));
        file.metadata = j.value("metadata", nlohmann::json::object());
        return file;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptModelError(path.string() + ": " + e.what());
    } catch (const ShapeError& e) {
        throw CorruptModelError(path.string() + ": " + e.what());
    }
}

}  // namespace irriloop
