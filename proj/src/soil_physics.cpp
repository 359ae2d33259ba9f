/**
 * @file soil_physics.cpp
 * @brief van Genuchten-Mualem relations and the implicit Richards integrator.
 */

#include "irriloop/soil_physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace irriloop {

namespace {

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw std::domain_error(std::string(what) + ": non-finite argument");
    }
}

double vg_m(const SoilParams& p) { return 1.0 - 1.0 / p.n; }

// 1 - (1 - eps)^m evaluated without cancellation.
double one_minus_pow_complement(double eps, double m) {
    return -std::expm1(m * std::log1p(-eps));
}

// Thomas algorithm; sub[0] and sup[n-1] are ignored. Overwrites rhs with the solution.
bool solve_tridiagonal(std::vector<double>& sub, std::vector<double>& diag,
                       std::vector<double>& sup, std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        if (diag[i - 1] == 0.0) return false;
        const double w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if (diag[n - 1] == 0.0) return false;
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) {
        rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
    }
    return std::all_of(rhs.begin(), rhs.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

void SoilParams::validate() const {
    if (!(ks > 0.0)) throw std::invalid_argument("soil: ks must be positive");
    if (!(theta_r >= 0.0 && theta_r < theta_s && theta_s <= 1.0)) {
        throw std::invalid_argument("soil: require 0 <= theta_r < theta_s <= 1");
    }
    if (!(alpha > 0.0)) throw std::invalid_argument("soil: alpha must be positive");
    if (!(n > 1.0)) throw std::invalid_argument("soil: n must exceed 1");
}

int ColumnGeometry::root_node_index() const {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n_nodes; ++k) {
        const double d = std::abs(node_depth(k) - root_depth);
        if (d < best_dist) {
            best_dist = d;
            best = k;
        }
    }
    return best;
}

int ColumnGeometry::root_zone_nodes() const {
    int count = 0;
    while (count < n_nodes && node_depth(count) <= root_depth) ++count;
    return count;
}

void ColumnGeometry::validate() const {
    if (!(total_depth > 0.0)) throw std::invalid_argument("geometry: total_depth must be positive");
    if (n_nodes < 2) throw std::invalid_argument("geometry: need at least two nodes");
    if (!(root_depth > 0.0 && root_depth <= total_depth)) {
        throw std::invalid_argument("geometry: root_depth must lie inside the column");
    }
}

double WaterStress::operator()(double h) const {
    if (h >= h1 || h <= h4) return 0.0;
    if (h > h2) return (h1 - h) / (h1 - h2);
    if (h >= h3) return 1.0;
    return (h - h4) / (h3 - h4);
}

void WaterStress::validate() const {
    if (!(h1 <= 0.0 && h2 < h1 && h3 < h2 && h4 < h3)) {
        throw std::invalid_argument("stress: anchors must satisfy h4 < h3 < h2 < h1 <= 0");
    }
}

FluxLedger& FluxLedger::operator+=(const FluxLedger& other) {
    inflow += other.inflow;
    drainage += other.drainage;
    transpiration += other.transpiration;
    substeps += other.substeps;
    halvings += other.halvings;
    clamp_events += other.clamp_events;
    return *this;
}

double capillary_capacity(double h, const SoilParams& p) {
    require_finite(h, "capillary_capacity");
    if (h >= 0.0) throw std::domain_error("capillary_capacity: requires h < 0");
    const double m = vg_m(p);
    const double s = -p.alpha * h;
    const double x = std::pow(s, p.n);
    return (p.theta_s - p.theta_r) * p.alpha * p.n * m * std::pow(s, p.n - 1.0) *
           std::pow(1.0 + x, 1.0 / p.n - 2.0);
}

double hydraulic_conductivity(double h, const SoilParams& p) {
    require_finite(h, "hydraulic_conductivity");
    if (h > 0.0) throw std::domain_error("hydraulic_conductivity: requires h <= 0");
    const double m = vg_m(p);
    const double x = std::pow(-p.alpha * h, p.n);
    const double se = std::pow(1.0 + x, -m);
    // Se^(1/m) = 1/(1+x), so the bracket is 1 - (1 - 1/(1+x))^m.
    const double bracket = one_minus_pow_complement(1.0 / (1.0 + x), m);
    return p.ks * std::sqrt(se) * bracket * bracket;
}

double water_content(double h, const SoilParams& p) {
    require_finite(h, "water_content");
    if (h > 0.0) throw std::domain_error("water_content: requires h <= 0");
    const double x = std::pow(-p.alpha * h, p.n);
    return (p.theta_s - p.theta_r) * std::pow(1.0 + x, -vg_m(p)) + p.theta_r;
}

double potential_from_water_content(double theta, const SoilParams& p) {
    require_finite(theta, "potential_from_water_content");
    if (!(theta > p.theta_r && theta < p.theta_s)) {
        throw std::domain_error("potential_from_water_content: theta outside (theta_r, theta_s)");
    }
    const double se = (theta - p.theta_r) / (p.theta_s - p.theta_r);
    const double x = std::expm1(-std::log(se) / vg_m(p));
    return -std::pow(x, 1.0 / p.n) / p.alpha;
}

SoilColumn::SoilColumn(SoilParams params, ColumnGeometry geometry, WaterStress stress,
                       IntegratorOptions options, ConductivityMean mean)
    : params_(params), geometry_(geometry), stress_(stress), options_(options), mean_(mean) {
    params_.validate();
    geometry_.validate();
    stress_.validate();
}

SoilColumnState SoilColumn::uniform_state(double h) const {
    SoilColumnState s;
    s.h.assign(static_cast<std::size_t>(geometry_.n_nodes), h);
    check_state(s);
    return s;
}

void SoilColumn::check_state(const SoilColumnState& state) const {
    if (state.h.size() != static_cast<std::size_t>(geometry_.n_nodes)) {
        std::ostringstream os;
        os << "soil state has " << state.h.size() << " nodes, expected " << geometry_.n_nodes;
        throw std::invalid_argument(os.str());
    }
    for (double v : state.h) {
        if (!std::isfinite(v)) throw std::domain_error("soil state: non-finite potential");
        if (v >= 0.0) throw std::domain_error("soil state: potential must be negative");
    }
}

std::vector<double> SoilColumn::face_fluxes(const std::vector<double>& h, double irrigation,
                                            const WeatherSample& weather) const {
    const int n = geometry_.n_nodes;
    const double dz = geometry_.dz();
    std::vector<double> k_node(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) k_node[k] = hydraulic_conductivity(h[k], params_);

    std::vector<double> flux(static_cast<std::size_t>(n + 1));
    flux[0] = irrigation + weather.precipitation;
    for (int k = 1; k < n; ++k) {
        const double k_face = mean_ == ConductivityMean::arithmetic
                                  ? 0.5 * (k_node[k - 1] + k_node[k])
                                  : std::sqrt(k_node[k - 1] * k_node[k]);
        flux[k] = k_face * ((h[k - 1] - h[k]) / dz + 1.0);
    }
    flux[n] = k_node[n - 1];
    return flux;
}

std::vector<double> SoilColumn::sink(const std::vector<double>& h,
                                     const WeatherSample& weather) const {
    std::vector<double> s(h.size(), 0.0);
    const double demand = weather.kc * weather.et0 / geometry_.root_depth;
    if (demand == 0.0) return s;
    const int roots = geometry_.root_zone_nodes();
    for (int k = 0; k < roots; ++k) s[k] = stress_(h[k]) * demand;
    return s;
}

std::vector<double> SoilColumn::rhs(const SoilColumnState& state, double irrigation,
                                    const WeatherSample& weather) const {
    check_state(state);
    if (irrigation < 0.0) throw std::invalid_argument("rhs: irrigation must be nonnegative");
    const double dz = geometry_.dz();
    const auto flux = face_fluxes(state.h, irrigation, weather);
    const auto s = sink(state.h, weather);
    std::vector<double> dhdt(state.h.size());
    for (std::size_t k = 0; k < state.h.size(); ++k) {
        const double dtheta = (flux[k] - flux[k + 1]) / dz - s[k];
        dhdt[k] = dtheta / capillary_capacity(state.h[k], params_);
    }
    return dhdt;
}

// Mass-conserving implicit Euler residual:
// dz (theta(h) - theta(h_old)) - dt (J_top - J_bottom - S dz), per node.
void SoilColumn::residual(const std::vector<double>& h_old, const std::vector<double>& h,
                          double irrigation, const WeatherSample& weather, double dt,
                          std::vector<double>& out) const {
    const double dz = geometry_.dz();
    const auto flux = face_fluxes(h, irrigation, weather);
    const auto s = sink(h, weather);
    out.resize(h.size());
    for (std::size_t k = 0; k < h.size(); ++k) {
        out[k] = dz * (water_content(h[k], params_) - water_content(h_old[k], params_)) -
                 dt * (flux[k] - flux[k + 1] - s[k] * dz);
    }
}

bool SoilColumn::implicit_substep(const std::vector<double>& h_old, std::vector<double>& h,
                                  double irrigation, const WeatherSample& weather,
                                  double dt) const {
    const std::size_t n = h_old.size();
    h = h_old;
    std::vector<double> r, r_pert, h_pert;
    std::vector<double> sub(n), diag(n), sup(n), delta(n);

    for (int iter = 0; iter < options_.max_newton_iters; ++iter) {
        residual(h_old, h, irrigation, weather, dt, r);
        if (!std::all_of(r.begin(), r.end(), [](double v) { return std::isfinite(v); })) {
            return false;
        }

        // Tridiagonal Jacobian by forward differences with a three-color column grouping.
        std::fill(sub.begin(), sub.end(), 0.0);
        std::fill(diag.begin(), diag.end(), 0.0);
        std::fill(sup.begin(), sup.end(), 0.0);
        for (std::size_t color = 0; color < 3; ++color) {
            h_pert = h;
            for (std::size_t k = color; k < n; k += 3) {
                delta[k] = -1e-7 * std::max(std::abs(h[k]), 1e-3);
                h_pert[k] = h[k] + delta[k];
            }
            residual(h_old, h_pert, irrigation, weather, dt, r_pert);
            for (std::size_t k = color; k < n; k += 3) {
                if (k > 0) sup[k - 1] = (r_pert[k - 1] - r[k - 1]) / delta[k];
                diag[k] = (r_pert[k] - r[k]) / delta[k];
                if (k + 1 < n) sub[k + 1] = (r_pert[k + 1] - r[k + 1]) / delta[k];
            }
        }

        for (std::size_t k = 0; k < n; ++k) delta[k] = -r[k];
        if (!solve_tridiagonal(sub, diag, sup, delta)) return false;

        // Damp so that no node moves more than halfway toward saturation in one update.
        double lambda = 1.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (delta[k] > 0.0 && h[k] + delta[k] > 0.5 * h[k]) {
                lambda = std::min(lambda, -0.5 * h[k] / delta[k]);
            }
        }
        double max_step = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double d = lambda * delta[k];
            h[k] = std::max(h[k] + d, options_.h_min);
            max_step = std::max(max_step, std::abs(d));
        }
        if (lambda == 1.0 && max_step <= options_.newton_tol) return true;
    }
    return false;
}

SoilColumnState SoilColumn::step(const SoilColumnState& state, double irrigation,
                                 const WeatherSample& weather, double dt,
                                 FluxLedger* ledger) const {
    check_state(state);
    if (dt < 0.0) throw std::invalid_argument("step: dt must be nonnegative");
    if (irrigation < 0.0) throw std::invalid_argument("step: irrigation must be nonnegative");
    if (weather.precipitation < 0.0 || weather.et0 < 0.0 || weather.kc < 0.0) {
        throw std::invalid_argument("step: weather rates must be nonnegative");
    }

    SoilColumnState out = state;
    FluxLedger local;
    double remaining = dt;
    double substep = options_.initial_substep;
    std::vector<double> h_new;
    const int bottom = geometry_.n_nodes - 1;
    const double dz = geometry_.dz();

    while (remaining > 0.0) {
        double h_step = std::min(substep, remaining);
        // Avoid leaving a sliver that would force a tiny final sub-step.
        if (remaining - h_step < 1e-6 * h_step) h_step = remaining;

        if (!implicit_substep(out.h, h_new, irrigation, weather, h_step)) {
            substep = 0.5 * h_step;
            ++local.halvings;
            if (substep < options_.min_substep) {
                std::ostringstream os;
                os << "Richards integration failed at t=" << out.t << " s: sub-step fell below "
                   << options_.min_substep << " s";
                throw IntegrationError(os.str());
            }
            continue;
        }

        local.inflow += h_step * (irrigation + weather.precipitation);
        local.drainage += h_step * hydraulic_conductivity(h_new[bottom], params_);
        const auto s = sink(h_new, weather);
        for (double v : s) local.transpiration += h_step * v * dz;
        for (double& v : h_new) {
            if (v < options_.h_min || v > options_.h_max) {
                v = std::clamp(v, options_.h_min, options_.h_max);
                ++local.clamp_events;
            }
        }
        out.h.swap(h_new);
        out.t += h_step;
        remaining -= h_step;
        ++local.substeps;
        substep = std::min(2.0 * h_step, options_.max_substep);
        if (remaining <= 0.0) break;
    }
    out.t = state.t + dt;
    if (ledger) *ledger += local;
    return out;
}

double SoilColumn::measure_output(const SoilColumnState& state) const {
    return water_content(state.h.at(static_cast<std::size_t>(geometry_.root_node_index())),
                         params_);
}

double SoilColumn::storage(const SoilColumnState& state) const {
    double total = 0.0;
    for (double v : state.h) total += water_content(v, params_);
    return total * geometry_.dz();
}

}  // namespace irriloop
