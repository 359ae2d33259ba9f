/**
 * @file mismatch.hpp
 * @brief Online correction of surrogate predictions: a single additive bias or a
 *        box-constrained linear map, refreshed every f prediction steps.
 */
#pragma once

#include <string>
#include <utility>
#include <vector>

namespace irriloop {

class OneStepModel;
struct Dataset;

enum class CorrectionKind { none, single_bias, linear };

std::string to_string(CorrectionKind kind);
CorrectionKind correction_kind_from_string(const std::string& s);

struct ParameterBox {
    double lo;
    double hi;

    double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
};

/// Which prediction the recorded error refers to.
enum class ErrorReference {
    corrected,  // eta = y_act - (prediction after the current correction)
    raw,        // eta = y_act - (model output before correction)
};

class CorrectionState {
public:
    CorrectionState() = default;
    CorrectionState(CorrectionKind kind, int f, ParameterBox a_box = {0.8, 1.5},
                    ParameterBox b_box = {-0.2, 0.3},
                    ErrorReference reference = ErrorReference::raw);

    double apply(double y_pred) const;
    /// d apply / d y_pred.
    double slope() const { return kind_ == CorrectionKind::linear ? a_ : 1.0; }

    /// Records the step-i pair (1-based) and updates the parameters when f divides i.
    /// `y_model` is the uncorrected model output for that step.
    void record_and_maybe_update(int i, double y_act, double y_model);

    /// Back to b1 = 0, a = 1, b2 = 0 with an empty buffer.
    void reset();

    CorrectionKind kind() const { return kind_; }
    int frequency() const { return f_; }
    double b1() const { return b1_; }
    double a() const { return a_; }
    double b2() const { return b2_; }
    std::size_t buffered() const { return errors_.size(); }
    const ParameterBox& a_box() const { return a_box_; }
    const ParameterBox& b_box() const { return b_box_; }

    void set_bias(double b1) { b1_ = b1; }

private:
    CorrectionKind kind_{CorrectionKind::none};
    int f_{1};
    ParameterBox a_box_{0.8, 1.5};
    ParameterBox b_box_{-0.2, 0.3};
    ErrorReference reference_{ErrorReference::raw};
    double b1_{0.0};
    double a_{1.0};
    double b2_{0.0};
    std::vector<double> errors_;
    std::vector<std::pair<double, double>> pairs_;  // (model output, actual)
};

/// Update frequencies accepted for a horizon of N steps.
bool valid_frequency(CorrectionKind kind, int f, int horizon);

struct LinearFit {
    double a{1.0};
    double b2{0.0};
    double objective{0.0};  // sum of squared residuals
};

/// min over (a, b2) in A x B of sum_j (y_act_j - a * y_model_j - b2)^2.
LinearFit fit_linear_box(const std::vector<double>& y_model, const std::vector<double>& y_act,
                         const ParameterBox& a_box, const ParameterBox& b_box);

/// Mean absolute N-step prediction error with the correction restarted at every start
/// time. Histories come from the noisy outputs; errors are measured against the clean ones.
double evaluate_correction(const OneStepModel& model, const Dataset& data, CorrectionKind kind,
                           int f, int horizon = 20);

}  // namespace irriloop
