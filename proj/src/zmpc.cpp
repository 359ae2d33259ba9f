#include "irriloop/zmpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace irriloop {

using Eigen::Index;
using Eigen::MatrixXd;

void ZoneSpec::validate() const {
    if (!(y_lo_init <= y_hi_init)) throw std::invalid_argument("zone: initial bounds are not ordered");
    if (!(y_lo_term <= y_hi_term)) throw std::invalid_argument("zone: terminal bounds are not ordered");
    if (!(y_lo_init <= y_lo_term) || !(y_hi_term <= y_hi_init)) {
        throw std::invalid_argument("zone: terminal bounds must lie inside the initial zone");
    }
    if (!(mu >= 0.0)) throw std::invalid_argument("zone: shrink rate must be >= 0");
    if (horizon < 1) throw std::invalid_argument("zone: horizon must be >= 1");
}

std::pair<double, double> zone_bounds(int offset, const ZoneSpec& zone) {
    if (offset < 0 || offset > zone.horizon) throw std::out_of_range("zone_bounds: offset outside [0, N]");
    const double x = zone.mu * static_cast<double>(offset) / zone.horizon;
    const double lo = std::min(zone.y_lo_init * std::exp(x), zone.y_lo_term);
    const double hi = std::max(zone.y_hi_init * std::exp(-x), zone.y_hi_term);
    return {lo, hi};
}

void ZmpcConfig::validate() const {
    if (!(q >= 0.0) || !(r >= 0.0)) throw std::invalid_argument("zmpc: weights must be >= 0");
    if (horizon < 1) throw std::invalid_argument("zmpc: horizon must be >= 1");
    if (!(dt > 0.0) || !(u_max > 0.0)) throw std::invalid_argument("zmpc: dt and u_max must be positive");
    if (!(y_min < y_max)) throw std::invalid_argument("zmpc: output bounds are not ordered");
    if (!(penalty_factor >= 0.0)) throw std::invalid_argument("zmpc: penalty factor must be >= 0");
    if (iterations < 1 || restarts < 0) throw std::invalid_argument("zmpc: solver budget out of range");
}

double interval_distance(double y, double lo, double hi) {
    if (y < lo) return lo - y;
    if (y > hi) return y - hi;
    return 0.0;
}

namespace {

/// Signed distance: negative below the interval, positive above.
double signed_distance(double y, double lo, double hi) {
    if (y < lo) return y - lo;
    if (y > hi) return y - hi;
    return 0.0;
}

}  // namespace

double stage_cost(double y, int offset, double u_scaled, const ZoneSpec& zone, const ZmpcConfig& config) {
    const auto [lo, hi] = zone_bounds(offset, zone);
    const double d = interval_distance(y, lo, hi);
    return config.q * d * d + config.r * u_scaled * u_scaled;
}

SurrogateHorizon::SurrogateHorizon(const OneStepModel& model, MatrixXd history,
                                   std::vector<double> precipitation, double u_max)
    : model_(model), history_(std::move(history)), precipitation_(std::move(precipitation)), u_max_(u_max) {
    if (history_.rows() != model_.window() || history_.cols() != 2) {
        throw ShapeError("surrogate horizon: history does not match the model window");
    }
}

std::vector<double> SurrogateHorizon::predict(const std::vector<double>& u, MatrixXd* jacobian) const {
    const int n = static_cast<int>(u.size());
    if (precipitation_.size() < u.size()) throw std::invalid_argument("surrogate horizon: forecast shorter than N");
    const Index p = history_.rows();
    MatrixXd window = history_;
    std::vector<double> y(u.size());
    std::vector<MatrixXd> grads;
    if (jacobian) grads.resize(u.size());

    for (int j = 0; j < n; ++j) {
        window(p - 1, 0) = u[j] * u_max_ + precipitation_[j];
        double raw = 0.0;
        if (jacobian) {
            raw = model_.predict_with_gradient(window, grads[j]);
        } else {
            raw = model_.predict_raw(window);
        }
        y[j] = std::clamp(raw, model_.bounds.lo, model_.bounds.hi);
        if (jacobian && y[j] != raw) grads[j].setZero();
        if (j + 1 < n) {
            for (Index r = 0; r + 1 < p; ++r) window.row(r) = window.row(r + 1);
            window(p - 1, 1) = y[j];
        }
    }

    if (jacobian) {
        // Forward sensitivities: row j of the window at step j holds time index
        // tau = j - (p - 1) + row, with u_tau a decision for tau >= 0 and y_tau a
        // prediction for tau >= 1.
        MatrixXd& s = *jacobian;
        s = MatrixXd::Zero(n, n);
        for (int j = 0; j < n; ++j) {
            const MatrixXd& g = grads[j];
            for (int m = 0; m <= j; ++m) {
                const Index row = m - j + p - 1;
                if (row >= 0) s(j, m) += g(row, 0) * u_max_;
            }
            for (int tau = std::max<int>(1, j - static_cast<int>(p) + 1); tau <= j; ++tau) {
                const double gy = g(tau - j + p - 1, 1);
                if (gy != 0.0) s.row(j) += gy * s.row(tau - 1);
            }
        }
    }
    return y;
}

RichardsHorizon::RichardsHorizon(const SoilColumn& column, SoilColumnState state,
                                 std::vector<WeatherSample> forecast, double u_max, double dt)
    : column_(column), state_(std::move(state)), forecast_(std::move(forecast)), u_max_(u_max), dt_(dt) {}

std::vector<double> RichardsHorizon::predict(const std::vector<double>& u, MatrixXd* jacobian) const {
    const int n = static_cast<int>(u.size());
    if (forecast_.size() < u.size()) throw std::invalid_argument("richards horizon: forecast shorter than N");
    std::vector<SoilColumnState> states(u.size() + 1);
    states[0] = state_;
    std::vector<double> y(u.size());
    for (int j = 0; j < n; ++j) {
        states[j + 1] = column_.step(states[j], u[j] * u_max_, forecast_[j], dt_);
        y[j] = column_.measure_output(states[j + 1]);
    }
    if (jacobian) {
        MatrixXd& s = *jacobian;
        s = MatrixXd::Zero(n, n);
        const double h = 1e-3;
        for (int m = 0; m < n; ++m) {
            // Step inward at the upper bound so the perturbed input stays feasible.
            const double du = u[m] + h <= 1.0 ? h : -h;
            SoilColumnState x = column_.step(states[m], (u[m] + du) * u_max_, forecast_[m], dt_);
            s(m, m) = (column_.measure_output(x) - y[m]) / du;
            for (int j = m + 1; j < n; ++j) {
                x = column_.step(x, u[j] * u_max_, forecast_[j], dt_);
                s(j, m) = (column_.measure_output(x) - y[j]) / du;
            }
        }
    }
    return y;
}

OcpEvaluation evaluate_ocp(const HorizonModel& model, const std::vector<double>& u, const ZoneSpec& zone,
                           const ZmpcConfig& config, const CorrectionState* correction, bool with_gradient) {
    const int n = static_cast<int>(u.size());
    MatrixXd jac;
    OcpEvaluation ev;
    const std::vector<double> raw = model.predict(u, with_gradient ? &jac : nullptr);
    ev.y.resize(u.size());
    std::vector<double> dj_dy(u.size(), 0.0);
    const double slope = correction ? correction->slope() : 1.0;
    const double w_out = config.penalty_factor * config.q;
    for (int k = 0; k < n; ++k) {
        const double y = correction ? correction->apply(raw[k]) : raw[k];
        ev.y[k] = y;
        const auto [lo, hi] = zone_bounds(std::min(k + 1, zone.horizon), zone);
        const double dz = signed_distance(y, lo, hi);
        const double dy = signed_distance(y, config.y_min, config.y_max);
        ev.objective += config.q * dz * dz + config.r * u[k] * u[k] + w_out * dy * dy;
        dj_dy[k] = (2.0 * config.q * dz + 2.0 * w_out * dy) * slope;
    }
    if (with_gradient) {
        ev.gradient.assign(u.size(), 0.0);
        for (int m = 0; m < n; ++m) {
            double g = 2.0 * config.r * u[m];
            for (int k = m; k < n; ++k) g += jac(k, m) * dj_dy[k];
            ev.gradient[m] = g;
        }
    }
    return ev;
}

namespace {

struct CandidateResult {
    std::vector<double> u;
    OcpEvaluation eval;
    int iterations{0};
    bool converged{false};
    std::vector<double> trace;
};

CandidateResult descend(const HorizonModel& model, std::vector<double> u, const ZoneSpec& zone,
                        const ZmpcConfig& config, const CorrectionState* correction) {
    CandidateResult res;
    const std::size_t n = u.size();
    for (double& v : u) v = std::clamp(v, 0.0, 1.0);
    OcpEvaluation cur = evaluate_ocp(model, u, zone, config, correction, true);
    double alpha = 1.0 / std::max(1.0, 2.0 * (config.r + config.q));
    std::vector<double> trial(n);
    const double sigma = 1e-4;

    for (int it = 0; it < config.iterations; ++it) {
        bool accepted = false;
        double step_norm = 0.0;
        OcpEvaluation next;
        for (int bt = 0; bt < 40; ++bt) {
            double decrease = 0.0;
            step_norm = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                trial[k] = std::clamp(u[k] - alpha * cur.gradient[k], 0.0, 1.0);
                decrease += cur.gradient[k] * (trial[k] - u[k]);
                step_norm = std::max(step_norm, std::abs(trial[k] - u[k]));
            }
            if (step_norm <= config.step_tolerance) break;
            next = evaluate_ocp(model, trial, zone, config, correction, false);
            if (next.objective <= cur.objective + sigma * decrease) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        ++res.iterations;
        if (!accepted) {
            res.trace.push_back(cur.objective);
            res.converged = true;
            break;
        }
        u = trial;
        cur = evaluate_ocp(model, u, zone, config, correction, true);
        res.trace.push_back(cur.objective);
        alpha *= 2.0;
        if (step_norm <= 10.0 * config.step_tolerance) {
            res.converged = true;
            break;
        }
    }
    res.u = std::move(u);
    res.eval = std::move(cur);
    return res;
}

}  // namespace

OcpSolution solve_ocp(const HorizonModel& model, const ZoneSpec& zone, const ZmpcConfig& config,
                      const CorrectionState* correction, const std::optional<std::vector<double>>& warm_start) {
    config.validate();
    zone.validate();
    const auto n = static_cast<std::size_t>(config.horizon);

    std::vector<std::vector<double>> starts;
    if (warm_start) {
        if (warm_start->size() != n) throw std::invalid_argument("solve_ocp: warm start has the wrong length");
        starts.push_back(*warm_start);
    }
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int k = 0; k < config.restarts; ++k) {
        if (k == 0) {
            starts.emplace_back(n, 0.0);
        } else if (k == 1) {
            starts.emplace_back(n, 1.0);
        } else {
            std::vector<double> r(n);
            for (double& v : r) v = uni(rng);
            starts.push_back(std::move(r));
        }
    }
    if (starts.empty()) starts.emplace_back(n, 0.0);

    OcpSolution best;
    best.objective = std::numeric_limits<double>::infinity();
    best.candidates = static_cast<int>(starts.size());
    for (std::size_t c = 0; c < starts.size(); ++c) {
        CandidateResult r = descend(model, starts[c], zone, config, correction);
        best.candidate_objectives.push_back(r.eval.objective);
        if (r.eval.objective < best.objective) {
            best.objective = r.eval.objective;
            best.u = r.u;
            best.y = r.eval.y;
            best.iterations = r.iterations;
            best.converged = r.converged;
            best.trace = std::move(r.trace);
            best.best_candidate = static_cast<int>(c);
        }
    }
    return best;
}

std::vector<double> shift_warm_start(const std::vector<double>& u) {
    if (u.empty()) return u;
    std::vector<double> out(u.begin() + 1, u.end());
    out.push_back(u.back());
    return out;
}

namespace {

std::vector<double> forecast_precipitation(const std::vector<WeatherSample>& forecast, int n) {
    if (forecast.size() < static_cast<std::size_t>(n)) throw std::invalid_argument("controller: forecast shorter than N");
    std::vector<double> p(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) p[j] = forecast[j].precipitation;
    return p;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SurrogateController::SurrogateController(const OneStepModel& model, ZmpcConfig config, ZoneSpec zone,
                                         CorrectionState correction, double y0, bool warm_start)
    : model_(model), config_(config), zone_(zone), correction_(std::move(correction)),
      history_(MatrixXd::Zero(model.window(), 2)), use_warm_start_(warm_start) {
    config_.validate();
    zone_.validate();
    history_.col(1).setConstant(y0);
}

ControllerStep SurrogateController::step(const ControllerInput& input) {
    const auto t0 = std::chrono::steady_clock::now();
    const Index p = history_.rows();
    if (step_index_ > 0) {
        for (Index r = 0; r + 1 < p; ++r) history_.row(r) = history_.row(r + 1);
        history_(p - 1, 0) = 0.0;
    }
    history_(p - 1, 1) = input.y_meas;

    if (last_prediction_) correction_.record_and_maybe_update(step_index_, input.y_meas, *last_prediction_);

    const std::vector<double> precip = forecast_precipitation(input.forecast, config_.horizon);
    SurrogateHorizon horizon(model_, history_, precip, config_.u_max);
    ZmpcConfig cfg = config_;
    cfg.seed = config_.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(step_index_ + 1));
    ControllerStep out;
    out.solution = solve_ocp(horizon, zone_, cfg, &correction_,
                             use_warm_start_ ? warm_ : std::optional<std::vector<double>>{});
    out.u = out.solution.u.front() * config_.u_max;

    // Raw one-step prediction for the input actually applied.
    MatrixXd window = history_;
    window(p - 1, 0) = out.u + precip.front();
    last_prediction_ = std::clamp(model_.predict_raw(window), model_.bounds.lo, model_.bounds.hi);
    history_(p - 1, 0) = out.u + precip.front();
    warm_ = shift_warm_start(out.solution.u);
    ++step_index_;
    out.solve_seconds = seconds_since(t0);
    return out;
}

RichardsController::RichardsController(const SoilColumn& column, ZmpcConfig config, ZoneSpec zone,
                                       bool warm_start)
    : column_(column), config_(config), zone_(zone), use_warm_start_(warm_start) {
    config_.validate();
    zone_.validate();
}

ControllerStep RichardsController::step(const ControllerInput& input) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!input.plant) throw std::invalid_argument("richards controller needs the plant state");
    if (input.forecast.size() < static_cast<std::size_t>(config_.horizon)) {
        throw std::invalid_argument("controller: forecast shorter than N");
    }
    SoilColumnState state = *input.plant;
    // The measured output replaces the root-node value.
    const auto root = static_cast<std::size_t>(column_.geometry().root_node_index());
    const SoilParams& sp = column_.params();
    const double y = std::clamp(input.y_meas, sp.theta_r + 1e-6, sp.theta_s - 1e-6);
    state.h[root] = std::min(potential_from_water_content(y, sp), column_.options().h_max);

    std::vector<WeatherSample> forecast(input.forecast.begin(), input.forecast.begin() + config_.horizon);
    RichardsHorizon horizon(column_, state, std::move(forecast), config_.u_max, config_.dt);
    ZmpcConfig cfg = config_;
    cfg.seed = config_.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(step_index_ + 1));
    ControllerStep out;
    out.solution = solve_ocp(horizon, zone_, cfg, nullptr,
                             use_warm_start_ ? warm_ : std::optional<std::vector<double>>{});
    out.u = out.solution.u.front() * config_.u_max;
    warm_ = shift_warm_start(out.solution.u);
    ++step_index_;
    out.solve_seconds = seconds_since(t0);
    return out;
}

}  // namespace irriloop
