#include "irriloop/excitation.hpp"

#include "irriloop/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace irriloop {

void PrsSpec::validate() const {
    if (levels.empty()) throw std::invalid_argument("prs: levels must be nonempty");
    for (double l : levels) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw std::invalid_argument("prs: levels must be finite and >= 0");
    }
    if (min_hold < 1 || max_hold < min_hold) {
        throw std::invalid_argument("prs: hold bounds must satisfy 1 <= min_hold <= max_hold");
    }
    if (length == 0) throw std::invalid_argument("prs: length must be positive");
}

std::vector<double> gen_prs(const PrsSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::size_t> pick(0, spec.levels.size() - 1);
    std::uniform_int_distribution<int> hold(spec.min_hold, spec.max_hold);
    std::vector<double> out;
    out.reserve(spec.length + static_cast<std::size_t>(spec.max_hold));
    while (out.size() < spec.length) {
        const double level = spec.levels[pick(rng)];
        const int duration = hold(rng);
        if (spec.mode == PrsMode::held_levels) {
            out.insert(out.end(), static_cast<std::size_t>(duration), level);
        } else {
            out.push_back(level);
            out.insert(out.end(), static_cast<std::size_t>(duration - 1), 0.0);
        }
    }
    out.resize(spec.length);
    return out;
}

void Dataset::validate() const {
    if (y_clean.size() != u.size() || y_noisy.size() != u.size()) {
        throw std::invalid_argument("dataset: u, y_clean and y_noisy must have equal lengths");
    }
    if (!(dt > 0.0)) throw std::invalid_argument("dataset: dt must be positive");
}

Dataset simulate_dataset(const std::vector<double>& signal, const SimulationSetup& setup,
                         double noise_frac, std::uint64_t seed, NoiseKind kind) {
    if (signal.empty()) throw std::invalid_argument("simulate_dataset: empty signal");
    for (double u : signal) {
        if (!(u >= 0.0)) throw std::invalid_argument("simulate_dataset: inputs must be >= 0");
    }
    Dataset data;
    data.dt = setup.dt;
    data.u = signal;
    data.y_clean.resize(signal.size());
    SoilColumnState state = setup.initial;
    const std::size_t n_weather = setup.weather.size();
    for (std::size_t k = 0; k < signal.size(); ++k) {
        data.y_clean[k] = setup.column.measure_output(state);
        const WeatherSample w = n_weather ? setup.weather.samples[k % n_weather] : WeatherSample{};
        state = setup.column.step(state, signal[k], w, setup.dt);
    }
    data.y_noisy = data.y_clean;
    return with_noise(data, noise_frac, seed, kind);
}

Dataset with_noise(const Dataset& clean, double noise_frac, std::uint64_t seed, NoiseKind kind) {
    if (!(noise_frac >= 0.0)) throw std::invalid_argument("noise fraction must be >= 0");
    Dataset data = clean;
    const auto [lo, hi] = std::minmax_element(data.y_clean.begin(), data.y_clean.end());
    data.y_min = *lo;
    data.y_max = *hi;
    const double eps_max = noise_frac * (data.y_max - data.y_min);
    data.y_noisy = data.y_clean;
    if (eps_max <= 0.0) return data;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-eps_max, eps_max);
    std::normal_distribution<double> gauss(0.0, eps_max / 3.0);
    for (double& y : data.y_noisy) {
        double e = 0.0;
        if (kind == NoiseKind::uniform) {
            e = uni(rng);
        } else {
            do {
                e = gauss(rng);
            } while (std::abs(e) > eps_max);
        }
        y += e;
    }
    return data;
}

void ScalingSpec::validate() const {
    if (!(u.gain > 0.0) || !(y.gain > 0.0) || !std::isfinite(u.gain) || !std::isfinite(y.gain)) {
        throw std::invalid_argument("scaler: gains must be positive and finite");
    }
}

ScalingSpec fit_scaler(double u_max, double y_lo, double y_hi) {
    if (!(u_max > 0.0)) throw std::invalid_argument("scaler: degenerate input range (u_max <= 0)");
    if (!(y_hi > y_lo)) throw std::invalid_argument("scaler: degenerate output range");
    ScalingSpec s;
    s.u = AffineMap{0.0, 1.0 / u_max};
    s.y = AffineMap{0.5 * (y_lo + y_hi), 2.0 * kScaledOutputBound / (y_hi - y_lo)};
    return s;
}

ScalingSpec fit_scaler(const Dataset& data, double y_lo, double y_hi) {
    if (data.u.empty()) throw std::invalid_argument("scaler: empty dataset");
    return fit_scaler(*std::max_element(data.u.begin(), data.u.end()), y_lo, y_hi);
}

SequenceSet window(const Dataset& data, std::size_t p, const ScalingSpec& scaler) {
    data.validate();
    if (p == 0) throw std::length_error("window: p must be positive");
    if (data.size() < p + 1) {
        throw std::length_error("window: dataset of length " + std::to_string(data.size()) +
                                " is shorter than p + 1 = " + std::to_string(p + 1));
    }
    SequenceSet set;
    set.window = static_cast<int>(p);
    set.channels = 2;
    const std::size_t count = data.size() - p;
    set.inputs.reserve(count);
    set.targets.reserve(count);
    std::vector<double> su(data.size()), sy(data.size());
    for (std::size_t k = 0; k < data.size(); ++k) {
        su[k] = scaler.u.apply(data.u[k]);
        sy[k] = scaler.y.apply(data.y_noisy[k]);
    }
    for (std::size_t k = 0; k < count; ++k) {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(p), 2);
        for (std::size_t j = 0; j < p; ++j) {
            x(static_cast<Eigen::Index>(j), 0) = su[k + j];
            x(static_cast<Eigen::Index>(j), 1) = sy[k + j];
        }
        set.inputs.push_back(std::move(x));
        set.targets.push_back(sy[k + p]);
    }
    return set;
}

double max_abs_scaled(const SequenceSet& set) {
    double m = 0.0;
    for (const auto& x : set.inputs) m = std::max(m, x.cwiseAbs().maxCoeff());
    for (double t : set.targets) m = std::max(m, std::abs(t));
    return m;
}

namespace {

/// Mean output over the final simulated day under a constant input.
double settled_output(const SimulationSetup& setup, const SoilColumnState& start, double u, int days) {
    const int per_day = static_cast<int>(std::lround(86400.0 / setup.dt));
    const int total = std::max(1, days) * per_day;
    SoilColumnState state = start;
    const std::size_t n_weather = setup.weather.size();
    double sum = 0.0;
    for (int k = 0; k < total; ++k) {
        const WeatherSample w = n_weather ? setup.weather.samples[k % n_weather] : WeatherSample{};
        state = setup.column.step(state, u, w, setup.dt);
        if (k >= total - per_day) sum += setup.column.measure_output(state);
    }
    return sum / per_day;
}

}  // namespace

double calibrate_input_for_output(const SimulationSetup& setup, double target, int days) {
    const SoilParams& sp = setup.column.params();
    if (!(target > sp.theta_r && target < sp.theta_s)) {
        throw std::domain_error("calibrate: target output outside (theta_r, theta_s)");
    }
    const SoilColumnState start = setup.column.uniform_state(potential_from_water_content(target, sp));
    if (settled_output(setup, start, 0.0, days) >= target) return 0.0;

    double lo = 0.0;
    double hi = 1e-9;
    // A constant input at K_s would saturate the column, which the unsaturated model excludes.
    const double cap = 0.8 * sp.ks;
    while (settled_output(setup, start, hi, days) < target) {
        if (hi >= cap) throw std::runtime_error("calibrate: target output not reachable below 0.8 K_s");
        lo = hi;
        hi = std::min(4.0 * hi, cap);
    }
    for (int it = 0; it < 30; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (settled_output(setup, start, mid, days) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

std::vector<double> calibrate_levels(const SimulationSetup& setup, double y_lo, double y_hi,
                                     int count, int days) {
    if (count < 1 || !(y_hi >= y_lo)) throw std::invalid_argument("calibrate_levels: bad band or count");
    std::vector<double> levels;
    for (int i = 0; i < count; ++i) {
        const double frac = count == 1 ? 0.5 : static_cast<double>(i) / (count - 1);
        levels.push_back(calibrate_input_for_output(setup, y_lo + frac * (y_hi - y_lo), days));
    }
    return levels;
}

std::string to_string(PrsMode mode) {
    return mode == PrsMode::impulse ? "impulse" : "held-levels";
}

PrsMode prs_mode_from_string(const std::string& s) {
    if (s == "held-levels" || s == "held_levels") return PrsMode::held_levels;
    if (s == "impulse") return PrsMode::impulse;
    throw std::invalid_argument("unknown PRS mode `" + s + "`");
}

namespace {

std::filesystem::path meta_path(const std::filesystem::path& csv_path) {
    std::filesystem::path p = csv_path;
    p.replace_extension(".meta.json");
    return p;
}

}  // namespace

void save_dataset(const std::filesystem::path& csv_path, const Dataset& data,
                  const DatasetMeta& meta) {
    data.validate();
    CsvTable table;
    std::vector<double> t(data.size());
    for (std::size_t k = 0; k < data.size(); ++k) t[k] = static_cast<double>(k) * data.dt;
    table.add_column("t_s", std::move(t));
    table.add_column("u_mps", data.u);
    table.add_column("y_clean", data.y_clean);
    table.add_column("y_noisy", data.y_noisy);
    write_csv(csv_path, table);

    nlohmann::json j;
    j["seed"] = meta.seed;
    j["dt_s"] = data.dt;
    j["noise_frac"] = meta.noise_frac;
    j["prs"] = {{"levels", meta.spec.levels},
                {"min_hold", meta.spec.min_hold},
                {"max_hold", meta.spec.max_hold},
                {"length", meta.spec.length},
                {"seed", meta.spec.seed},
                {"mode", to_string(meta.spec.mode)}};
    j["scaler"] = {{"u_offset", meta.scaler.u.offset},
                   {"u_gain", meta.scaler.u.gain},
                   {"y_offset", meta.scaler.y.offset},
                   {"y_gain", meta.scaler.y.gain}};
    j["y_min"] = data.y_min;
    j["y_max"] = data.y_max;
    std::ofstream out(meta_path(csv_path));
    if (!out) throw std::runtime_error("cannot write " + meta_path(csv_path).string());
    out << j.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& csv_path) {
    const CsvTable table = read_csv(csv_path);
    Dataset data;
    const auto& t = table.column("t_s");
    data.u = table.column("u_mps");
    data.y_clean = table.column("y_clean");
    data.y_noisy = table.column("y_noisy");
    if (data.u.empty()) throw CsvError(csv_path.string() + ": dataset has no rows");
    if (t.size() >= 2) data.dt = t[1] - t[0];
    const auto [lo, hi] = std::minmax_element(data.y_clean.begin(), data.y_clean.end());
    data.y_min = *lo;
    data.y_max = *hi;
    data.validate();
    return data;
}

}  // namespace irriloop
