#include "irriloop/surrogate.hpp"

#include "irriloop/csv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace irriloop {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

namespace {

Batch scale_histories(const Batch& histories, const AffineMap& u, const AffineMap& y) {
    Batch out = histories;
    for (auto& m : out) {
        m.row(0) = ((m.row(0).array() - u.offset) * u.gain).matrix();
        m.row(1) = ((m.row(1).array() - y.offset) * y.gain).matrix();
    }
    return out;
}

Batch as_batch(const MatrixXd& history) {
    Batch b(static_cast<std::size_t>(history.rows()));
    for (Index r = 0; r < history.rows(); ++r) b[r] = history.row(r).transpose();
    return b;
}

void check_history(const MatrixXd& history, int p) {
    if (history.rows() != p || history.cols() != 2) {
        throw ShapeError("history must be " + std::to_string(p) + " x 2, got " +
                         std::to_string(history.rows()) + " x " + std::to_string(history.cols()));
    }
}

nlohmann::json scaler_json(const ScalingSpec& s) {
    return {{"u_offset", s.u.offset}, {"u_gain", s.u.gain}, {"y_offset", s.y.offset}, {"y_gain", s.y.gain}};
}

ScalingSpec scaler_from_json(const nlohmann::json& j) {
    ScalingSpec s;
    s.u = {j.at("u_offset").get<double>(), j.at("u_gain").get<double>()};
    s.y = {j.at("y_offset").get<double>(), j.at("y_gain").get<double>()};
    s.validate();
    return s;
}

}  // namespace

double OneStepModel::predict_raw(const MatrixXd& history) const {
    check_history(history, window());
    return predict_batch(as_batch(history))(0);
}

LstmModel::LstmModel(std::string name, Network net, ScalingSpec scaler, OperatingRange range)
    : name_(std::move(name)), net_(std::move(net)), scaler_(scaler), range_(range) {
    scaler_.validate();
    if (net_.spec().channels != 2) throw ShapeError("sub-model networks take two channels");
}

RowVectorXd LstmModel::predict_scaled(const Batch& histories) const {
    return net_.forward(scale_histories(histories, scaler_.u, scaler_.y));
}

RowVectorXd LstmModel::predict_batch(const Batch& histories) const {
    RowVectorXd s = predict_scaled(histories);
    return (s.array() / scaler_.y.gain + scaler_.y.offset).matrix();
}

double LstmModel::predict_with_gradient(const MatrixXd& history, MatrixXd& gradient) const {
    check_history(history, window());
    MatrixXd scaled(history.rows(), 2);
    scaled.col(0) = ((history.col(0).array() - scaler_.u.offset) * scaler_.u.gain).matrix();
    scaled.col(1) = ((history.col(1).array() - scaler_.y.offset) * scaler_.y.gain).matrix();
    double out = 0.0;
    gradient = net_.input_gradient(scaled, &out);
    gradient.col(0) *= scaler_.u.gain / scaler_.y.gain;
    return out / scaler_.y.gain + scaler_.y.offset;
}

void LstmModel::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
    nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
    meta["kind"] = "lstm";
    meta["name"] = name_;
    meta["scaler"] = scaler_json(scaler_);
    meta["range"] = {range_.lo, range_.hi};
    save_model(path, net_, meta);
}

LstmModel LstmModel::load(const std::filesystem::path& path) {
    ModelFile file = load_model(path);
    try {
        const auto& m = file.metadata;
        if (m.at("kind").get<std::string>() != "lstm") {
            throw CorruptModelError(path.string() + ": not a sequence model");
        }
        const auto range = m.at("range").get<std::vector<double>>();
        if (range.size() != 2) throw CorruptModelError(path.string() + ": bad range");
        return LstmModel(m.at("name").get<std::string>(), std::move(file.network),
                         scaler_from_json(m.at("scaler")), {range[0], range[1]});
    } catch (const nlohmann::json::exception& e) {
        throw CorruptModelError(path.string() + ": " + e.what());
    }
}

TwoLayerSurrogate::TwoLayerSurrogate(std::vector<LstmModel> bank, Network aggregator, AffineMap y_scale)
    : bank_(std::move(bank)), aggregator_(std::move(aggregator)), y_scale_(y_scale) {
    if (bank_.empty()) throw ShapeError("two-layer surrogate needs at least one sub-model");
    const auto& s = aggregator_.spec();
    if (!s.lstm.empty() || s.window != 1 || s.channels != static_cast<int>(bank_.size())) {
        throw ShapeError("aggregator input arity must equal the number of sub-models");
    }
    for (const auto& m : bank_) {
        if (m.window() != bank_.front().window()) throw ShapeError("sub-models disagree on the window length");
        if (m.scaler().y.offset != y_scale_.offset || m.scaler().y.gain != y_scale_.gain) {
            throw ShapeError("sub-models must share the output scaling");
        }
    }
}

int TwoLayerSurrogate::window() const { return bank_.front().window(); }

MatrixXd TwoLayerSurrogate::bank_outputs(const Batch& histories) const {
    MatrixXd out(static_cast<Index>(bank_.size()), histories.front().cols());
    for (std::size_t k = 0; k < bank_.size(); ++k) out.row(static_cast<Index>(k)) = bank_[k].predict_scaled(histories);
    return out;
}

RowVectorXd TwoLayerSurrogate::predict_batch(const Batch& histories) const {
    const RowVectorXd s = aggregator_.forward(Batch{bank_outputs(histories)});
    return (s.array() / y_scale_.gain + y_scale_.offset).matrix();
}

double TwoLayerSurrogate::predict_with_gradient(const MatrixXd& history, MatrixXd& gradient) const {
    check_history(history, window());
    const Index k = static_cast<Index>(bank_.size());
    MatrixXd features(1, k);
    std::vector<MatrixXd> sub_grads(bank_.size());
    for (Index i = 0; i < k; ++i) {
        // Sub-model gradients in unscaled history units, converted back to scaled output.
        features(0, i) = y_scale_.apply(bank_[i].predict_with_gradient(history, sub_grads[i]));
    }
    double out = 0.0;
    const MatrixXd agg_grad = aggregator_.input_gradient(features, &out);
    gradient = MatrixXd::Zero(history.rows(), 2);
    for (Index i = 0; i < k; ++i) gradient += agg_grad(0, i) * sub_grads[i];
    return out / y_scale_.gain + y_scale_.offset;
}

TwoLayerSurrogate TwoLayerSurrogate::load(const std::filesystem::path& dir) {
    std::vector<LstmModel> bank;
    for (const char* name : {"m1.json", "m2.json", "m3.json"}) bank.push_back(LstmModel::load(dir / name));
    ModelFile agg = load_model(dir / "agg.json");
    try {
        if (agg.metadata.at("kind").get<std::string>() != "aggregator") {
            throw CorruptModelError((dir / "agg.json").string() + ": not an aggregator");
        }
        const AffineMap y{agg.metadata.at("y_offset").get<double>(), agg.metadata.at("y_gain").get<double>()};
        return TwoLayerSurrogate(std::move(bank), std::move(agg.network), y);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptModelError((dir / "agg.json").string() + ": " + e.what());
    }
}

void TwoLayerSurrogate::save(const std::filesystem::path& dir) const {
    if (bank_.size() != 3) throw ShapeError("model directories hold exactly three sub-models");
    std::filesystem::create_directories(dir);
    const char* names[] = {"m1.json", "m2.json", "m3.json"};
    for (std::size_t k = 0; k < bank_.size(); ++k) bank_[k].save(dir / names[k]);
    save_model(dir / "agg.json", aggregator_,
               {{"kind", "aggregator"}, {"y_offset", y_scale_.offset}, {"y_gain", y_scale_.gain}});
}

NetworkSpec sub_model_spec(int lstm_layers, int units, int window) {
    NetworkSpec s;
    s.window = window;
    s.channels = 2;
    for (int l = 0; l < lstm_layers; ++l) s.lstm.push_back({units, Activation::tanh});
    s.dense = {{1, Activation::tanh}};
    return s;
}

NetworkSpec aggregator_spec(int units, int bank_size) {
    NetworkSpec s;
    s.window = 1;
    s.channels = bank_size;
    s.dense = {{units, Activation::sigmoid}, {units, Activation::sigmoid}, {1, Activation::identity}};
    return s;
}

NetworkSpec baseline_spec(int units, int window) {
    NetworkSpec s;
    s.window = window;
    s.channels = 2;
    s.lstm = {{units, Activation::sigmoid}, {units, Activation::sigmoid}};
    s.dense = {{1, Activation::tanh}};
    return s;
}

int parameter_matched_units(std::size_t budget, int window) {
    int units = 1;
    while (static_cast<std::size_t>(Network(baseline_spec(units + 1, window)).parameter_count()) <= budget) ++units;
    return units;
}

SequenceSet windows_in_range(const Dataset& data, std::size_t p, const ScalingSpec& scaler,
                             const OperatingRange& range) {
    const SequenceSet all = window(data, p, scaler);
    SequenceSet out;
    out.window = all.window;
    out.channels = all.channels;
    for (std::size_t k = 0; k < all.size(); ++k) {
        if (range.contains(data.y_clean[k + p - 1])) {
            out.inputs.push_back(all.inputs[k]);
            out.targets.push_back(all.targets[k]);
        }
    }
    return out;
}

SequenceSet interleave(const SequenceSet& a, const SequenceSet& b) {
    if (a.size() && b.size() && (a.window != b.window || a.channels != b.channels)) {
        throw ShapeError("interleave: sets differ in window shape");
    }
    SequenceSet out;
    out.window = a.size() ? a.window : b.window;
    out.channels = a.size() ? a.channels : b.channels;
    for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
        if (i < a.size()) {
            out.inputs.push_back(a.inputs[i]);
            out.targets.push_back(a.targets[i]);
        }
        if (i < b.size()) {
            out.inputs.push_back(b.inputs[i]);
            out.targets.push_back(b.targets[i]);
        }
    }
    return out;
}

LstmModel train_lstm_model(const std::string& name, const NetworkSpec& spec, const Dataset& data,
                           const ScalingSpec& scaler, const TrainConfig& config, OperatingRange range,
                           TrainResult* history) {
    return train_lstm_model(name, spec, window(data, static_cast<std::size_t>(spec.window), scaler), scaler,
                            config, range, history);
}

LstmModel train_lstm_model(const std::string& name, const NetworkSpec& spec, const SequenceSet& set,
                           const ScalingSpec& scaler, const TrainConfig& config, OperatingRange range,
                           TrainResult* history) {
    TrainResult r = train(spec, set, config);
    LstmModel model(name, r.network, scaler, range);
    if (history) *history = std::move(r);
    return model;
}

SequenceSet aggregator_set(const std::vector<LstmModel>& bank, const Dataset& data,
                           const AffineMap& y_scale, std::size_t p) {
    data.validate();
    if (data.size() < p + 1) throw std::length_error("aggregator_set: dataset shorter than p + 1");
    const std::size_t count = data.size() - p;
    SequenceSet set;
    set.window = 1;
    set.channels = static_cast<int>(bank.size());
    set.inputs.reserve(count);
    set.targets.reserve(count);
    const std::size_t chunk = 1024;
    for (std::size_t start = 0; start < count; start += chunk) {
        const std::size_t n = std::min(chunk, count - start);
        Batch hist(p, MatrixXd(2, static_cast<Index>(n)));
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t r = 0; r < p; ++r) {
                hist[r](0, static_cast<Index>(s)) = data.u[start + s + r];
                hist[r](1, static_cast<Index>(s)) = data.y_noisy[start + s + r];
            }
        }
        MatrixXd feats(static_cast<Index>(bank.size()), static_cast<Index>(n));
        for (std::size_t k = 0; k < bank.size(); ++k) feats.row(static_cast<Index>(k)) = bank[k].predict_scaled(hist);
        for (std::size_t s = 0; s < n; ++s) {
            set.inputs.push_back(feats.col(static_cast<Index>(s)).transpose());
            set.targets.push_back(y_scale.apply(data.y_noisy[start + s + p]));
        }
    }
    return set;
}

Network train_aggregator(const std::vector<LstmModel>& bank, const Dataset& data,
                         const AffineMap& y_scale, const NetworkSpec& spec, const TrainConfig& config,
                         TrainResult* history) {
    if (bank.empty()) throw std::invalid_argument("train_aggregator: empty sub-model bank");
    const SequenceSet set = aggregator_set(bank, data, y_scale, static_cast<std::size_t>(bank.front().window()));
    TrainResult r = train(spec, set, config);
    Network net = r.network;
    if (history) *history = std::move(r);
    return net;
}

Prediction predict_one_step(const OneStepModel& model, const MatrixXd& history) {
    check_history(history, model.window());
    Prediction p;
    for (Index r = 0; r < history.rows(); ++r) {
        if (history(r, 1) < kOutputRangeLo || history(r, 1) > kOutputRangeHi) p.out_of_range = true;
    }
    const double raw = model.predict_raw(history);
    p.y = std::clamp(raw, model.bounds.lo, model.bounds.hi);
    p.clipped = p.y != raw;
    return p;
}

RolloutResult rollout(const OneStepModel& model, const MatrixXd& history,
                      const std::vector<double>& future_u, int n_steps, const RolloutOptions& options) {
    check_history(history, model.window());
    if (n_steps < 1) throw std::invalid_argument("rollout: N must be >= 1");
    if (future_u.size() < static_cast<std::size_t>(n_steps)) {
        throw std::invalid_argument("rollout: input sequence shorter than N");
    }
    if (options.truth && options.truth->size() < static_cast<std::size_t>(n_steps)) {
        throw std::invalid_argument("rollout: truth sequence shorter than N");
    }
    MatrixXd window = history;
    const Index p = window.rows();
    window(p - 1, 0) = future_u[0];
    RolloutResult out;
    for (int j = 0; j < n_steps; ++j) {
        const double raw = model.predict_raw(window);
        const double y_model = std::clamp(raw, model.bounds.lo, model.bounds.hi);
        if (y_model != raw) ++out.clip_events;
        double y_pred = y_model;
        if (options.correction) {
            y_pred = options.correction->apply(y_model);
            if (options.truth) options.correction->record_and_maybe_update(j + 1, (*options.truth)[j], y_model);
        }
        out.raw.push_back(y_model);
        out.predictions.push_back(y_pred);
        if (j + 1 == n_steps) break;
        for (Index r = 0; r + 1 < p; ++r) window.row(r) = window.row(r + 1);
        window(p - 1, 0) = future_u[static_cast<std::size_t>(j + 1)];
        window(p - 1, 1) = options.feedback == FeedbackMode::corrected ? y_pred : y_model;
    }
    return out;
}

MatrixXd history_at(const Dataset& data, std::size_t t, int p) {
    if (t + 1 < static_cast<std::size_t>(p) || t >= data.size()) {
        throw std::out_of_range("history_at: window does not fit the dataset");
    }
    MatrixXd h(p, 2);
    for (int r = 0; r < p; ++r) {
        h(r, 0) = data.u[t + 1 - p + r];
        h(r, 1) = data.y_noisy[t + 1 - p + r];
    }
    return h;
}

MatrixXd multi_step_predictions(const OneStepModel& model, const Dataset& data, int n_steps,
                                int* clip_events) {
    data.validate();
    const int p = model.window();
    if (n_steps < 1) throw std::invalid_argument("multi_step_predictions: N must be >= 1");
    if (data.size() < static_cast<std::size_t>(p + n_steps)) {
        throw std::length_error("multi_step_predictions: dataset shorter than p + N");
    }
    const std::size_t starts = data.size() - static_cast<std::size_t>(p + n_steps) + 1;
    MatrixXd out(static_cast<Index>(starts), n_steps);
    int clips = 0;
    const std::size_t chunk = 2048;
    for (std::size_t first = 0; first < starts; first += chunk) {
        const std::size_t n = std::min(chunk, starts - first);
        const auto B = static_cast<Index>(n);
        Batch hist(static_cast<std::size_t>(p), MatrixXd(2, B));
        for (std::size_t s = 0; s < n; ++s) {
            for (int r = 0; r < p; ++r) {
                hist[r](0, static_cast<Index>(s)) = data.u[first + s + r];
                hist[r](1, static_cast<Index>(s)) = data.y_noisy[first + s + r];
            }
        }
        for (int j = 0; j < n_steps; ++j) {
            RowVectorXd y = model.predict_batch(hist);
            for (Index b = 0; b < B; ++b) {
                const double c = std::clamp(y(b), model.bounds.lo, model.bounds.hi);
                if (c != y(b)) ++clips;
                y(b) = c;
            }
            out.block(static_cast<Index>(first), j, B, 1) = y.transpose();
            if (j + 1 == n_steps) break;
            for (int r = 0; r + 1 < p; ++r) hist[r].swap(hist[r + 1]);
            for (Index b = 0; b < B; ++b) {
                hist[p - 1](0, b) = data.u[first + static_cast<std::size_t>(b) + static_cast<std::size_t>(p + j)];
            }
            hist[p - 1].row(1) = y;
        }
    }
    if (clip_events) *clip_events = clips;
    return out;
}

double nrmse(const std::vector<double>& actual, const std::vector<double>& predicted) {
    if (actual.empty() || actual.size() != predicted.size()) {
        throw std::invalid_argument("nrmse: sequences must have equal nonzero length");
    }
    const auto [lo, hi] = std::minmax_element(actual.begin(), actual.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) throw std::domain_error("nrmse: actual sequence has a degenerate range");
    double sum = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double r = actual[i] - predicted[i];
        sum += r * r;
    }
    return std::sqrt(sum / static_cast<double>(actual.size())) / range;
}

std::vector<double> multi_step_nrmse(const OneStepModel& model, const Dataset& data,
                                     const std::vector<int>& steps) {
    if (steps.empty()) return {};
    const int n = *std::max_element(steps.begin(), steps.end());
    if (*std::min_element(steps.begin(), steps.end()) < 1) throw std::invalid_argument("steps must be >= 1");
    const MatrixXd pred = multi_step_predictions(model, data, n);
    const std::size_t p = static_cast<std::size_t>(model.window());
    std::vector<double> out;
    for (int k : steps) {
        std::vector<double> actual(static_cast<std::size_t>(pred.rows())), predicted(actual.size());
        for (std::size_t s = 0; s < actual.size(); ++s) {
            actual[s] = data.y_clean[s + p - 1 + static_cast<std::size_t>(k)];
            predicted[s] = pred(static_cast<Index>(s), k - 1);
        }
        out.push_back(nrmse(actual, predicted));
    }
    return out;
}

NrmseTable validate_models(const std::vector<const OneStepModel*>& models,
                           const std::vector<const Dataset*>& data, const std::vector<int>& steps) {
    if (models.size() != data.size()) throw std::invalid_argument("validate_models: one dataset per model");
    NrmseTable table;
    table.steps = steps;
    for (std::size_t i = 0; i < models.size(); ++i) {
        table.models.push_back(models[i]->name());
        table.values.push_back(multi_step_nrmse(*models[i], *data[i], steps));
    }
    return table;
}

void write_nrmse_table(const std::filesystem::path& path, const NrmseTable& table) {
    std::vector<std::string> header{"steps"};
    header.insert(header.end(), table.models.begin(), table.models.end());
    std::vector<std::vector<std::string>> rows;
    for (std::size_t k = 0; k < table.steps.size(); ++k) {
        std::vector<std::string> row{std::to_string(table.steps[k])};
        for (const auto& v : table.values) row.push_back(format_double(v[k], 6));
        rows.push_back(std::move(row));
    }
    write_text_csv(path, header, rows);
}

double percent_difference(double benchmark, double proposed) {
    if (benchmark == 0.0) throw std::domain_error("percent_difference: zero benchmark");
    return 100.0 * (benchmark - proposed) / benchmark;
}

}  // namespace irriloop
