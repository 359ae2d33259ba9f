#include <doctest.h>

#include "irriloop/zmpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

using namespace irriloop;

namespace {

/// Linear bucket: y(k + 1) = y(k) + gain * (u * u_max + P) - loss.
class Bucket : public HorizonModel {
public:
    Bucket(double y0, double gain, double loss, std::vector<double> rain = {})
        : y0_(y0), gain_(gain), loss_(loss), rain_(std::move(rain)) {}

    std::vector<double> predict(const std::vector<double>& u, Eigen::MatrixXd* jac) const override {
        const int n = static_cast<int>(u.size());
        std::vector<double> y(u.size());
        double cur = y0_;
        for (int k = 0; k < n; ++k) {
            const double p = k < static_cast<int>(rain_.size()) ? rain_[k] : 0.0;
            cur += gain_ * (u[k] + p) - loss_;
            y[k] = cur;
        }
        if (jac) {
            *jac = Eigen::MatrixXd::Zero(n, n);
            for (int j = 0; j < n; ++j)
                for (int m = 0; m <= j; ++m) (*jac)(j, m) = gain_;
        }
        return y;
    }

private:
    double y0_, gain_, loss_;
    std::vector<double> rain_;
};

/// One-step model of the same bucket acting on unscaled histories.
class BucketStep : public OneStepModel {
public:
    BucketStep(double gain_per_mps, double loss) : g_(gain_per_mps), loss_(loss) {}
    int window() const override { return 3; }
    std::string name() const override { return "bucket"; }
    Eigen::RowVectorXd predict_batch(const Batch& h) const override {
        return (h.back().row(1).array() + g_ * h.back().row(0).array() - loss_).matrix();
    }
    double predict_with_gradient(const Eigen::MatrixXd& h, Eigen::MatrixXd& g) const override {
        g = Eigen::MatrixXd::Zero(h.rows(), 2);
        g(h.rows() - 1, 0) = g_;
        g(h.rows() - 1, 1) = 1.0;
        return h(h.rows() - 1, 1) + g_ * h(h.rows() - 1, 0) - loss_;
    }

private:
    double g_, loss_;
};

ZmpcConfig small_config(int n) {
    ZmpcConfig c;
    c.horizon = n;
    c.iterations = 300;
    return c;
}

ZoneSpec zone_for(int n, double mu = 0.0) {
    ZoneSpec z;
    z.horizon = n;
    z.mu = mu;
    return z;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
}

std::vector<double> central_difference(const HorizonModel& model, std::vector<double> u, const ZoneSpec& zone,
                                       const ZmpcConfig& cfg, const CorrectionState* corr) {
    std::vector<double> g(u.size());
    const double h = 1e-6;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double keep = u[i];
        u[i] = keep + h;
        const double fp = evaluate_ocp(model, u, zone, cfg, corr, false).objective;
        u[i] = keep - h;
        const double fm = evaluate_ocp(model, u, zone, cfg, corr, false).objective;
        u[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("zone bounds reproduce the worked evaluations") {
    ZoneSpec z = zone_for(20);
    for (int j = 0; j <= 20; ++j) {
        const auto [lo, hi] = zone_bounds(j, z);
        CHECK(lo == 0.18);
        CHECK(hi == 0.23);
    }
    z.mu = 1.0;
    auto [lo, hi] = zone_bounds(20, z);
    CHECK(lo == doctest::Approx(0.20).epsilon(1e-12));
    CHECK(hi == doctest::Approx(0.21).epsilon(1e-12));

    z.y_lo_term = 0.205;
    z.y_hi_term = 0.205;
    std::tie(lo, hi) = zone_bounds(20, z);
    CHECK(lo == doctest::Approx(0.205).epsilon(1e-12));
    CHECK(hi == doctest::Approx(0.205).epsilon(1e-12));
    CHECK_THROWS_AS(zone_bounds(21, z), std::out_of_range);
}

TEST_CASE("zones shrink monotonically and nest across shrink rates") {
    for (double mu : {0.0, 0.5, 0.7, 1.0, 3.0}) {
        const ZoneSpec z = zone_for(20, mu);
        const ZoneSpec tighter = zone_for(20, mu + 0.25);
        double prev_lo = 0.0, prev_hi = 1.0;
        for (int j = 0; j <= 20; ++j) {
            const auto [lo, hi] = zone_bounds(j, z);
            CHECK(lo >= prev_lo);
            CHECK(hi <= prev_hi);
            CHECK(lo <= hi);
            const auto [tlo, thi] = zone_bounds(j, tighter);
            CHECK(tlo >= lo);
            CHECK(thi <= hi);
            prev_lo = lo;
            prev_hi = hi;
        }
    }
}

TEST_CASE("invalid zones are rejected") {
    ZoneSpec z;
    z.y_lo_term = 0.17;
    CHECK_THROWS_AS(z.validate(), std::invalid_argument);
    z = ZoneSpec{};
    z.mu = -1.0;
    CHECK_THROWS_AS(z.validate(), std::invalid_argument);
}

TEST_CASE("stage cost evaluations") {
    const ZoneSpec z = zone_for(20);
    const ZmpcConfig c;
    CHECK(stage_cost(0.2, 1, 0.0, z, c) == 0.0);
    CHECK(stage_cost(0.17, 1, 0.0, z, c) == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(stage_cost(0.2, 1, 0.5, z, c) == doctest::Approx(25.0));
}

TEST_CASE("clipped stage cost equals the minimum over the slack variable") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> uy(0.10, 0.30);
    const ZmpcConfig c;
    for (double mu : {0.0, 1.0}) {
        const ZoneSpec z = zone_for(20, mu);
        for (int trial = 0; trial < 100; ++trial) {
            const double y = uy(rng);
            const int j = trial % 21;
            const auto [lo, hi] = zone_bounds(j, z);
            double brute = std::numeric_limits<double>::infinity();
            double best_yz = lo;
            const int steps = static_cast<int>(std::floor((hi - lo) / 1e-4));
            for (int s = 0; s <= steps + 1; ++s) {
                const double yz = std::min(lo + s * 1e-4, hi);
                const double v = c.q * (y - yz) * (y - yz);
                if (v < brute) {
                    brute = v;
                    best_yz = yz;
                }
            }
            // Second pass at 1e-7 around the best coarse point.
            for (int s = -1000; s <= 1000; ++s) {
                const double yz = std::clamp(best_yz + s * 1e-7, lo, hi);
                brute = std::min(brute, c.q * (y - yz) * (y - yz));
            }
            CHECK(std::abs(stage_cost(y, j, 0.0, z, c) - brute) <= 1e-6);
        }
    }
}

TEST_CASE("objective gradient matches central differences") {
    const int n = 12;
    const ZmpcConfig cfg = small_config(n);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uu(0.0, 1.0);

    SUBCASE("linear bucket with a bias correction") {
        const Bucket model(0.19, 0.004, 0.002);
        CorrectionState corr(CorrectionKind::single_bias, 2);
        corr.set_bias(-0.01);
        for (double mu : {0.0, 1.0}) {
            std::vector<double> u(n);
            for (double& v : u) v = uu(rng);
            const ZoneSpec z = zone_for(n, mu);
            const auto ev = evaluate_ocp(model, u, z, cfg, &corr, true);
            CHECK(relative_error(ev.gradient, central_difference(model, u, z, cfg, &corr)) < 1e-3);
        }
    }

    SUBCASE("random LSTM surrogate through the rollout") {
        NetworkSpec spec;
        spec.window = 6;
        spec.lstm = {{8, Activation::tanh}};
        spec.dense = {{1, Activation::tanh}};
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            LstmModel lstm("r", Network::initialized(spec, seed), fit_scaler(2.5e-7, 0.12, 0.40));
            lstm.bounds = {0.0, 1.0};
            Eigen::MatrixXd hist(6, 2);
            for (int r = 0; r < 6; ++r) {
                hist(r, 0) = 1e-7 * uu(rng);
                hist(r, 1) = 0.17 + 0.05 * uu(rng);
            }
            std::vector<double> rain(n, 0.0);
            rain[3] = 1e-7;
            const SurrogateHorizon model(lstm, hist, rain, 2.5e-7);
            std::vector<double> u(n);
            for (double& v : u) v = uu(rng);
            const ZoneSpec z = zone_for(n, 0.7);
            const auto ev = evaluate_ocp(model, u, z, cfg, nullptr, true);
            CHECK(relative_error(ev.gradient, central_difference(model, u, z, cfg, nullptr)) < 1e-3);
        }
    }
}

TEST_CASE("zero input is optimal when the free response stays in the zone") {
    const int n = 8;
    const Bucket model(0.205, 0.01, 0.0);
    const ZmpcConfig cfg = small_config(n);
    const ZoneSpec z = zone_for(n);

    double best = std::numeric_limits<double>::infinity();
    double best_u = -1.0;
    for (int i = 0; i <= 20; ++i) {
        const std::vector<double> u(n, 0.05 * i);
        const double j = evaluate_ocp(model, u, z, cfg, nullptr, false).objective;
        if (j < best) {
            best = j;
            best_u = 0.05 * i;
        }
    }
    CHECK(best_u == 0.0);

    const OcpSolution sol = solve_ocp(model, z, cfg);
    for (double v : sol.u) CHECK(v < 0.01);
    CHECK(sol.objective <= best + 1e-9);
}

TEST_CASE("a pure input penalty gives zero input") {
    ZmpcConfig cfg = small_config(6);
    cfg.q = 0.0;
    const OcpSolution sol = solve_ocp(Bucket(0.15, 0.01, 0.001), zone_for(6), cfg);
    for (double v : sol.u) CHECK(v == 0.0);
}

TEST_CASE("solver trace descends and warm starts are never worse than zero input") {
    const int n = 10;
    const Bucket model(0.17, 0.01, 0.002);
    ZmpcConfig cfg = small_config(n);
    const ZoneSpec z = zone_for(n, 0.5);
    const OcpSolution cold = solve_ocp(model, z, cfg);
    REQUIRE_FALSE(cold.trace.empty());
    for (std::size_t i = 1; i < cold.trace.size(); ++i) CHECK(cold.trace[i] <= cold.trace[i - 1] + 1e-12);
    for (double v : cold.u) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(cold.u.front() > 0.0);

    const OcpSolution warm = solve_ocp(model, z, cfg, nullptr, shift_warm_start(cold.u));
    const double zero_start = evaluate_ocp(model, std::vector<double>(n, 0.0), z, cfg, nullptr, false).objective;
    CHECK(warm.objective <= zero_start);
    CHECK(warm.candidates == cfg.restarts + 1);
}

TEST_CASE("forecast rain lowers irrigation elementwise") {
    const int n = 12;
    std::vector<double> rain(n, 0.0);
    for (int k = 4; k < 8; ++k) rain[k] = 0.6;
    const ZmpcConfig cfg = small_config(n);
    const ZoneSpec z = zone_for(n);
    const OcpSolution dry = solve_ocp(Bucket(0.185, 0.01, 0.004), z, cfg);
    const OcpSolution wet = solve_ocp(Bucket(0.185, 0.01, 0.004, rain), z, cfg);
    for (int k = 0; k < n; ++k) CHECK(wet.u[k] <= dry.u[k] + 1e-6);
    CHECK(std::accumulate(wet.u.begin(), wet.u.end(), 0.0) < std::accumulate(dry.u.begin(), dry.u.end(), 0.0));
}

TEST_CASE("warm start shift pads with the last element") {
    CHECK(shift_warm_start({0.1, 0.2, 0.3}) == std::vector<double>{0.2, 0.3, 0.3});
    CHECK(shift_warm_start({}).empty());
}

TEST_CASE("surrogate controller is deterministic and respects the input bounds") {
    const BucketStep model(4e4, 0.003);
    ZmpcConfig cfg = small_config(10);
    const ZoneSpec z = zone_for(10);
    ControllerInput in;
    in.forecast.assign(10, WeatherSample{});

    auto run = [&](bool warm) {
        SurrogateController c(model, cfg, z, CorrectionState(CorrectionKind::single_bias, 2, {0.8, 1.5},
                                                             {-0.2, 0.3}, ErrorReference::raw),
                              0.2, warm);
        std::vector<double> applied;
        double y = 0.2;
        for (int k = 0; k < 6; ++k) {
            in.y_meas = y;
            const ControllerStep s = c.step(in);
            CHECK(s.u >= 0.0);
            CHECK(s.u <= cfg.u_max);
            applied.push_back(s.u);
            y = y + 4e4 * s.u - 0.003;
        }
        return applied;
    };
    CHECK(run(false) == run(false));
    CHECK(run(true) == run(true));

    SurrogateController c(model, cfg, z, CorrectionState(CorrectionKind::none, 1), 0.2, false);
    in.y_meas = 0.2;
    const double first = c.step(in).u;
    CHECK(c.history()(2, 1) == 0.2);
    CHECK(c.history()(2, 0) == first);
}

TEST_CASE("richards horizon Jacobian agrees with a direct perturbation") {
    const SoilColumn column(SoilParams{}, ColumnGeometry{});
    const SoilColumnState x0 = column.uniform_state(-0.2);
    const WeatherSeries w = dry_weather(4, 5e-8);
    const RichardsHorizon model(column, x0, w.samples, 2.5e-7, 7200.0);
    const std::vector<double> u{0.3, 0.6, 0.2, 0.9};
    Eigen::MatrixXd jac;
    const std::vector<double> y = model.predict(u, &jac);
    for (int m = 0; m < 4; ++m) {
        std::vector<double> up = u, um = u;
        up[m] += 1e-2;
        um[m] -= 1e-2;
        const auto yp = model.predict(up, nullptr);
        const auto ym = model.predict(um, nullptr);
        for (int j = 0; j < 4; ++j) {
            const double fd = (yp[j] - ym[j]) / 2e-2;
            CHECK(jac(j, m) == doctest::Approx(fd).epsilon(2e-2).scale(1e-6));
            if (j < m) CHECK(jac(j, m) == 0.0);
        }
    }
    CHECK(y.back() > 0.0);
}
