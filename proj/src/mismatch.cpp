#include "irriloop/mismatch.hpp"

#include "irriloop/excitation.hpp"
#include "irriloop/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace irriloop {

std::string to_string(CorrectionKind kind) {
    switch (kind) {
        case CorrectionKind::none: return "none";
        case CorrectionKind::single_bias: return "bias";
        case CorrectionKind::linear: return "linear";
    }
    return "none";
}

CorrectionKind correction_kind_from_string(const std::string& s) {
    if (s == "none") return CorrectionKind::none;
    if (s == "bias" || s == "single_bias") return CorrectionKind::single_bias;
    if (s == "linear") return CorrectionKind::linear;
    throw std::invalid_argument("unknown correction kind `" + s + "`");
}

bool valid_frequency(CorrectionKind kind, int f, int horizon) {
    if (f < 1 || horizon < 1 || horizon % f != 0) return false;
    if (kind == CorrectionKind::linear && f == 1) return false;
    return true;
}

CorrectionState::CorrectionState(CorrectionKind kind, int f, ParameterBox a_box,
                                 ParameterBox b_box, ErrorReference reference)
    : kind_(kind), f_(f), a_box_(a_box), b_box_(b_box), reference_(reference) {
    if (f < 1) throw std::invalid_argument("correction: update frequency must be >= 1");
    if (kind == CorrectionKind::linear && f == 1) {
        throw std::invalid_argument("correction: the linear map needs f >= 2");
    }
    if (!(a_box.lo <= a_box.hi) || !(b_box.lo <= b_box.hi)) {
        throw std::invalid_argument("correction: parameter boxes must be ordered");
    }
    reset();
}

void CorrectionState::reset() {
    b1_ = 0.0;
    a_ = a_box_.clamp(1.0);
    b2_ = b_box_.clamp(0.0);
    errors_.clear();
    pairs_.clear();
}

double CorrectionState::apply(double y_pred) const {
    switch (kind_) {
        case CorrectionKind::none: return y_pred;
        case CorrectionKind::single_bias: return y_pred + b1_;
        case CorrectionKind::linear: return a_ * y_pred + b2_;
    }
    return y_pred;
}

void CorrectionState::record_and_maybe_update(int i, double y_act, double y_model) {
    if (kind_ == CorrectionKind::none) return;
    const double reference = reference_ == ErrorReference::corrected ? apply(y_model) : y_model;
    errors_.push_back(y_act - reference);
    pairs_.emplace_back(y_model, y_act);
    if (i % f_ != 0) return;

    if (kind_ == CorrectionKind::single_bias) {
        b1_ = std::accumulate(errors_.begin(), errors_.end(), 0.0) / static_cast<double>(errors_.size());
    } else {
        std::vector<double> x, y;
        for (const auto& [m, act] : pairs_) {
            x.push_back(m);
            y.push_back(act);
        }
        const LinearFit fit = fit_linear_box(x, y, a_box_, b_box_);
        a_ = fit.a;
        b2_ = fit.b2;
    }
    errors_.clear();
    pairs_.clear();
}

namespace {

double sse(const std::vector<double>& x, const std::vector<double>& y, double a, double b) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double r = y[j] - a * x[j] - b;
        s += r * r;
    }
    return s;
}

}  // namespace

LinearFit fit_linear_box(const std::vector<double>& y_model, const std::vector<double>& y_act,
                         const ParameterBox& a_box, const ParameterBox& b_box) {
    if (y_model.size() != y_act.size() || y_model.empty()) {
        throw std::invalid_argument("fit_linear_box: need equal nonempty samples");
    }
    const double n = static_cast<double>(y_model.size());
    const double sx = std::accumulate(y_model.begin(), y_model.end(), 0.0);
    const double sy = std::accumulate(y_act.begin(), y_act.end(), 0.0);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t j = 0; j < y_model.size(); ++j) {
        sxx += y_model[j] * y_model[j];
        sxy += y_model[j] * y_act[j];
    }

    LinearFit best{a_box.clamp(1.0), b_box.clamp(0.0), std::numeric_limits<double>::infinity()};
    auto consider = [&](double a, double b) {
        const double v = sse(y_model, y_act, a, b);
        if (v < best.objective) best = {a, b, v};
    };
    // Best b2 for fixed a and best a for fixed b2, each clamped into its interval. The
    // objective is a convex quadratic, so the box minimum is the interior stationary
    // point or lies on one of these edge minimizers.
    auto b_for = [&](double a) { return b_box.clamp((sy - a * sx) / n); };
    auto a_for = [&](double b) { return sxx > 0.0 ? a_box.clamp((sxy - b * sx) / sxx) : a_box.clamp(1.0); };

    const double det = n * sxx - sx * sx;
    if (det > 1e-14 * std::max(1.0, n * sxx)) {
        const double a = (n * sxy - sx * sy) / det;
        const double b = (sy - a * sx) / n;
        if (a >= a_box.lo && a <= a_box.hi && b >= b_box.lo && b <= b_box.hi) consider(a, b);
    }
    for (double a : {a_box.lo, a_box.hi, a_box.clamp(1.0)}) consider(a, b_for(a));
    for (double b : {b_box.lo, b_box.hi}) consider(a_for(b), b);
    return best;
}

double evaluate_correction(const OneStepModel& model, const Dataset& data, CorrectionKind kind,
                           int f, int horizon) {
    if (!valid_frequency(kind, f, horizon)) {
        throw std::invalid_argument("evaluate_correction: update frequency " + std::to_string(f) +
                                    " is not valid for " + to_string(kind) + " with N = " +
                                    std::to_string(horizon));
    }
    data.validate();
    const int p = model.window();
    if (data.size() < static_cast<std::size_t>(p + horizon)) {
        throw std::length_error("evaluate_correction: dataset shorter than p + N");
    }
    const std::size_t starts = data.size() - static_cast<std::size_t>(p + horizon) + 1;
    const auto B = static_cast<Eigen::Index>(starts);

    // Rolling windows for every start, advanced in lockstep.
    Batch hist(static_cast<std::size_t>(p), Eigen::MatrixXd(2, B));
    for (std::size_t s = 0; s < starts; ++s) {
        for (int r = 0; r < p; ++r) {
            hist[r](0, static_cast<Eigen::Index>(s)) = data.u[s + r];
            hist[r](1, static_cast<Eigen::Index>(s)) = data.y_noisy[s + r];
        }
    }
    std::vector<CorrectionState> states(starts, CorrectionState(kind, f));
    double total = 0.0;
    for (int j = 0; j < horizon; ++j) {
        const Eigen::RowVectorXd raw = model.predict_batch(hist);
        Eigen::RowVectorXd fed(B);
        for (std::size_t s = 0; s < starts; ++s) {
            const auto b = static_cast<Eigen::Index>(s);
            const double y_model = std::clamp(raw(b), model.bounds.lo, model.bounds.hi);
            const double y_pred = states[s].apply(y_model);
            const double y_act = data.y_clean[s + static_cast<std::size_t>(p + j)];
            total += std::abs(y_act - y_pred);
            states[s].record_and_maybe_update(j + 1, y_act, y_model);
            fed(b) = y_pred;
        }
        if (j + 1 == horizon) break;
        for (int r = 0; r + 1 < p; ++r) hist[r] = hist[r + 1];
        for (std::size_t s = 0; s < starts; ++s) {
            const auto b = static_cast<Eigen::Index>(s);
            hist[p - 1](0, b) = data.u[s + static_cast<std::size_t>(p + j)];
            hist[p - 1](1, b) = fed(b);
        }
    }
    return total / (static_cast<double>(starts) * horizon);
}

}  // namespace irriloop
