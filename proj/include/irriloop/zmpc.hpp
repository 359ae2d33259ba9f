/**
 * @file zmpc.hpp
 * @brief Zone-tracking model predictive control with a shrinking target zone.
 *
 * The optimal-control problem is posed over N scaled irrigation rates u in [0, 1]^N
 * (physical rate = u * u_max) and solved by projected gradient descent with a
 * backtracking line search from several starting points.
 */
#pragma once

#include "irriloop/mismatch.hpp"
#include "irriloop/soil_physics.hpp"
#include "irriloop/surrogate.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace irriloop {

struct ZoneSpec {
    double y_lo_init{0.18};
    double y_hi_init{0.23};
    double y_lo_term{0.20};  // lower terminal bound
    double y_hi_term{0.21};  // upper terminal bound
    double mu{0.0};          // shrink rate
    int horizon{20};

    void validate() const;
};

/// Zone at `offset` steps ahead of the current solve time (0 <= offset <= N).
std::pair<double, double> zone_bounds(int offset, const ZoneSpec& zone);

struct ZmpcConfig {
    double q{4000.0};
    double r{100.0};
    int horizon{20};
    double dt{7200.0};
    double u_max{1e-6};            // [m/s], physical rate of a scaled input of 1
    double y_min{0.12};            // soft output constraint
    double y_max{0.40};
    double penalty_factor{100.0};  // output-constraint weight relative to q
    int iterations{500};           // per candidate
    int restarts{3};               // zero, max and random starts besides the warm start
    double step_tolerance{1e-7};   // stop when the projected step is below this (inf-norm)
    std::uint64_t seed{0};

    void validate() const;
};

/// Distance from y to [lo, hi]; zero inside.
double interval_distance(double y, double lo, double hi);

/// Q * dist(y, zone(offset))^2 + R * u^2 with the slack variable eliminated.
double stage_cost(double y, int offset, double u_scaled, const ZoneSpec& zone, const ZmpcConfig& config);

/// Predicts y(t_i + 1 .. t_i + N) from N scaled inputs.
class HorizonModel {
public:
    virtual ~HorizonModel() = default;
    /// When `jacobian` is given it receives dy/du (N x N, lower triangular).
    virtual std::vector<double> predict(const std::vector<double>& u_scaled,
                                        Eigen::MatrixXd* jacobian) const = 0;
};

/// Rollout of a one-step surrogate. Each step's model input is u * u_max plus the
/// forecast precipitation; raw (uncorrected) predictions are fed back.
class SurrogateHorizon : public HorizonModel {
public:
    SurrogateHorizon(const OneStepModel& model, Eigen::MatrixXd history,
                     std::vector<double> precipitation, double u_max);
    std::vector<double> predict(const std::vector<double>& u_scaled,
                                Eigen::MatrixXd* jacobian) const override;

private:
    const OneStepModel& model_;
    Eigen::MatrixXd history_;
    std::vector<double> precipitation_;
    double u_max_;
};

/// Richards-equation prediction from a known column state. The Jacobian is built by
/// forward differences that restart each perturbed run from the saved state at the
/// perturbed step.
class RichardsHorizon : public HorizonModel {
public:
    RichardsHorizon(const SoilColumn& column, SoilColumnState state,
                    std::vector<WeatherSample> forecast, double u_max, double dt);
    std::vector<double> predict(const std::vector<double>& u_scaled,
                                Eigen::MatrixXd* jacobian) const override;

private:
    const SoilColumn& column_;
    SoilColumnState state_;
    std::vector<WeatherSample> forecast_;
    double u_max_;
    double dt_;
};

struct OcpSolution {
    std::vector<double> u;       // scaled, in [0, 1]
    std::vector<double> y;       // predicted outputs after correction
    double objective{0.0};
    int iterations{0};           // of the returned candidate
    int candidates{0};
    int best_candidate{0};       // 0 is the warm start when one was given
    bool converged{false};
    std::vector<double> trace;   // objective after each iteration of the returned candidate
    std::vector<double> candidate_objectives;
};

/// Objective and gradient for one input sequence.
struct OcpEvaluation {
    double objective{0.0};
    std::vector<double> y;
    std::vector<double> gradient;  // empty unless requested
};

OcpEvaluation evaluate_ocp(const HorizonModel& model, const std::vector<double>& u_scaled,
                           const ZoneSpec& zone, const ZmpcConfig& config,
                           const CorrectionState* correction, bool with_gradient);

OcpSolution solve_ocp(const HorizonModel& model, const ZoneSpec& zone, const ZmpcConfig& config,
                      const CorrectionState* correction = nullptr,
                      const std::optional<std::vector<double>>& warm_start = std::nullopt);

/// Previous solution shifted one step and padded with its last value.
std::vector<double> shift_warm_start(const std::vector<double>& u);

/// What a controller sees at t_i.
struct ControllerInput {
    double y_meas{0.0};
    std::vector<WeatherSample> forecast;     // N samples starting at t_i
    const SoilColumnState* plant{nullptr};   // only read by the Richards-model controller
};

struct ControllerStep {
    double u{0.0};  // applied irrigation [m/s]
    OcpSolution solution;
    double solve_seconds{0.0};
};

class Controller {
public:
    virtual ~Controller() = default;
    virtual ControllerStep step(const ControllerInput& input) = 0;
    virtual std::string name() const = 0;
};

/// Receding-horizon controller over a one-step surrogate with online bias correction.
class SurrogateController : public Controller {
public:
    SurrogateController(const OneStepModel& model, ZmpcConfig config, ZoneSpec zone,
                        CorrectionState correction, double y0, bool warm_start = true);

    ControllerStep step(const ControllerInput& input) override;
    std::string name() const override { return model_.name(); }

    const Eigen::MatrixXd& history() const { return history_; }
    const CorrectionState& correction() const { return correction_; }

private:
    const OneStepModel& model_;
    ZmpcConfig config_;
    ZoneSpec zone_;
    CorrectionState correction_;
    Eigen::MatrixXd history_;  // last row holds y(t_i) once a measurement arrives
    std::optional<std::vector<double>> warm_;
    std::optional<double> last_prediction_;  // raw y(t_i | t_i - 1)
    bool use_warm_start_;
    int step_index_{0};
};

/// Controller whose prediction model is the Richards column itself.
class RichardsController : public Controller {
public:
    RichardsController(const SoilColumn& column, ZmpcConfig config, ZoneSpec zone,
                       bool warm_start = true);

    ControllerStep step(const ControllerInput& input) override;
    std::string name() const override { return "richards"; }

private:
    const SoilColumn& column_;
    ZmpcConfig config_;
    ZoneSpec zone_;
    std::optional<std::vector<double>> warm_;
    bool use_warm_start_;
    int step_index_{0};
};

}  // namespace irriloop
