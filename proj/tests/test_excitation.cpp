#include <doctest.h>

#include "irriloop/excitation.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <random>

using namespace irriloop;

namespace {

SimulationSetup default_setup() {
    SimulationSetup s;
    s.column = SoilColumn(SoilParams{}, ColumnGeometry{});
    s.initial = s.column.uniform_state(-0.2);
    s.weather = dry_weather(12, 5e-8);
    return s;
}

}  // namespace

TEST_CASE("prs signals") {
    PrsSpec spec;
    spec.levels = {0.0};
    spec.min_hold = 2;
    spec.max_hold = 7;
    spec.length = 500;
    spec.seed = 3;
    for (double u : gen_prs(spec)) CHECK(u == 0.0);

    spec.levels = {0.0, 1e-7, 2e-7};
    spec.length = 10000;
    const auto a = gen_prs(spec);
    CHECK(a == gen_prs(spec));
    CHECK(a.size() == 10000);

    spec.min_hold = spec.max_hold = 1;
    const auto single = gen_prs(spec);
    std::map<double, int> counts;
    for (double u : single) ++counts[u];
    for (double l : spec.levels) CHECK(std::abs(counts[l] / 10000.0 * 3.0 - 1.0) < 0.05);

    spec.min_hold = 3;
    spec.max_hold = 3;
    spec.mode = PrsMode::impulse;
    spec.length = 30;
    const auto imp = gen_prs(spec);
    for (std::size_t k = 0; k < imp.size(); ++k) {
        if (k % 3 != 0) CHECK(imp[k] == 0.0);
    }

    spec.min_hold = 0;
    CHECK_THROWS_AS(gen_prs(spec), std::invalid_argument);
}

TEST_CASE("held segments have lengths within the hold bounds") {
    PrsSpec spec{{1.0, 2.0, 3.0, 4.0}, 2, 5, 2000, 11, PrsMode::held_levels};
    const auto s = gen_prs(spec);
    // Adjacent segments may repeat a level, so only the lower bound on a run is checked.
    std::size_t run = 1;
    for (std::size_t k = 1; k < s.size(); ++k) {
        if (s[k] == s[k - 1]) {
            ++run;
        } else {
            CHECK(run >= 2);
            run = 1;
        }
    }
}

TEST_CASE("dataset simulation and noise bounds") {
    const SimulationSetup setup = default_setup();
    PrsSpec spec{{0.0, 1e-7, 3e-7}, 3, 12, 400, 5, PrsMode::held_levels};
    const auto u = gen_prs(spec);

    const Dataset clean = simulate_dataset(u, setup, 0.0, 1);
    CHECK(clean.y_noisy == clean.y_clean);
    CHECK(clean.y_clean[0] == doctest::Approx(0.26593).epsilon(1e-4));
    for (double y : clean.y_clean) {
        CHECK(y > 0.065);
        CHECK(y <= 0.41);
    }

    const Dataset noisy = simulate_dataset(u, setup, 0.1, 1);
    CHECK(noisy.y_clean == clean.y_clean);
    const double eps_max = 0.1 * (noisy.y_max - noisy.y_min);
    double worst = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) worst = std::max(worst, std::abs(noisy.y_noisy[k] - noisy.y_clean[k]));
    CHECK(worst <= eps_max);
    CHECK(worst > 0.5 * eps_max);
    CHECK(simulate_dataset(u, setup, 0.1, 1).y_noisy == noisy.y_noisy);

    const Dataset g = with_noise(clean, 0.1, 2, NoiseKind::gaussian);
    for (std::size_t k = 0; k < u.size(); ++k) CHECK(std::abs(g.y_noisy[k] - g.y_clean[k]) <= eps_max);

    Dataset flat = clean;
    std::fill(flat.y_clean.begin(), flat.y_clean.end(), 0.2);
    const Dataset flat_noisy = with_noise(flat, 0.1, 3);
    CHECK(flat_noisy.y_noisy == flat.y_clean);
}

TEST_CASE("irrigation input raises the output relative to no input") {
    const SimulationSetup setup = default_setup();
    const Dataset wet = simulate_dataset(std::vector<double>(24, 2e-7), setup, 0.0, 1);
    const Dataset dry = simulate_dataset(std::vector<double>(24, 0.0), setup, 0.0, 1);
    CHECK(wet.y_clean.back() > dry.y_clean.back());
}

TEST_CASE("scaler endpoints and round trip") {
    const ScalingSpec s = fit_scaler(2.5e-7);
    CHECK(s.u.apply(2.5e-7) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.u.apply(0.0) == 0.0);
    CHECK(std::abs(s.y.apply(0.26)) < 1e-15);
    CHECK(s.y.apply(0.40) == doctest::Approx(0.9).epsilon(1e-14));
    CHECK(s.y.apply(0.12) == doctest::Approx(-0.9).epsilon(1e-14));

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double u = d(rng) * 3e-7;
        const double y = 0.065 + d(rng) * 0.345;
        CHECK(std::abs(s.u.invert(s.u.apply(u)) - u) <= 1e-12 * 3e-7);
        CHECK(std::abs(s.y.invert(s.y.apply(y)) - y) <= 1e-12);
    }
    CHECK_THROWS_AS(fit_scaler(0.0), std::invalid_argument);
    CHECK_THROWS_AS(fit_scaler(1e-7, 0.3, 0.3), std::invalid_argument);
}

TEST_CASE("windowing") {
    Dataset d;
    for (int k = 0; k < 21; ++k) {
        d.u.push_back(1e-8 * k);
        d.y_clean.push_back(0.2 + 0.001 * k);
    }
    d.y_noisy = d.y_clean;
    const ScalingSpec s = fit_scaler(2.5e-7);
    const SequenceSet w = window(d, 20, s);
    CHECK(w.size() == 1);
    CHECK(w.targets[0] == s.y.apply(d.y_noisy[20]));

    for (int k = 21; k < 60; ++k) {
        d.u.push_back(1e-9 * (k % 7));
        d.y_clean.push_back(0.25 - 0.001 * (k % 5));
    }
    d.y_noisy = d.y_clean;
    const SequenceSet all = window(d, 20, s);
    CHECK(all.size() == 40);
    CHECK(max_abs_scaled(all) < 1.0);
    // Reconstruct the series from the first row of every window plus the tail of the last.
    for (std::size_t k = 0; k < all.size(); ++k) {
        CHECK(s.u.invert(all.inputs[k](0, 0)) == doctest::Approx(d.u[k]).epsilon(1e-12));
        CHECK(s.y.invert(all.inputs[k](0, 1)) == doctest::Approx(d.y_noisy[k]).epsilon(1e-12));
        if (k + 1 < all.size()) CHECK(all.inputs[k + 1](18, 1) == all.inputs[k](19, 1));
    }
    CHECK(s.y.invert(all.targets.back()) == doctest::Approx(d.y_noisy.back()).epsilon(1e-12));

    d.u.resize(20);
    d.y_clean.resize(20);
    d.y_noisy.resize(20);
    CHECK_THROWS_AS(window(d, 20, s), std::length_error);
}

TEST_CASE("calibrated inputs hold the requested output") {
    const SimulationSetup setup = default_setup();
    const double u = calibrate_input_for_output(setup, 0.25, 20);
    CHECK(u > 0.0);
    SimulationSetup probe = setup;
    probe.initial = setup.column.uniform_state(potential_from_water_content(0.25, setup.column.params()));
    const Dataset d = simulate_dataset(std::vector<double>(12 * 20, u), probe, 0.0, 1);
    double mean = 0.0;
    for (std::size_t k = d.size() - 12; k < d.size(); ++k) mean += d.y_clean[k] / 12.0;
    CHECK(mean == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("dataset persistence round-trips") {
    const auto dir = std::filesystem::temp_directory_path() / "irriloop_exc_test";
    std::filesystem::create_directories(dir);
    const SimulationSetup setup = default_setup();
    PrsSpec spec{{0.0, 2e-7}, 2, 6, 50, 9, PrsMode::impulse};
    const Dataset d = simulate_dataset(gen_prs(spec), setup, 0.1, 4);
    save_dataset(dir / "m1.csv", d, DatasetMeta{4, spec, 0.1, fit_scaler(d)});
    CHECK(std::filesystem::exists(dir / "m1.meta.json"));
    const Dataset back = load_dataset(dir / "m1.csv");
    CHECK(back.u == d.u);
    CHECK(back.y_clean == d.y_clean);
    CHECK(back.y_noisy == d.y_noisy);
    CHECK(back.dt == 7200.0);
    std::filesystem::remove_all(dir);
}
