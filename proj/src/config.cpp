#include "irriloop/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <type_traits>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace irriloop {

ExcitationSection::ExcitationSection() {
    sub_levels[0] = {1.76792e-08, 2.04059e-08, 3.23166e-08, 6.54137e-08, 1.41606e-07, 2.98941e-07};
    sub_levels[1] = {6.54137e-08, 1.15301e-07, 2.01757e-07, 3.45275e-07, 5.77124e-07, 9.47072e-07};
    sub_levels[2] = {4.79981e-07, 7.92258e-07, 1.29091e-06, 2.10322e-06, 3.51234e-06, 6.52113e-06};
    for (int i = 0; i <= 8; ++i) agg_levels.push_back(6e-6 * i / 8.0);
}

void ExcitationSection::validate() const {
    for (int m = 0; m < 3; ++m) {
        PrsSpec{sub_levels[m], sub_min_hold, sub_max_hold, sub_length, 0, PrsMode::held_levels}.validate();
        if (!(sub_start_output[m] > 0.0)) throw std::invalid_argument("excitation: start outputs must be positive");
    }
    PrsSpec{agg_levels, agg_min_hold, agg_max_hold, agg_length, 0, PrsMode::impulse}.validate();
    if (sub_validation_length == 0 || validation_length == 0 || impulse_length == 0) {
        throw std::invalid_argument("excitation: dataset lengths must be positive");
    }
    if (!(noise_frac >= 0.0) || !(validation_noise_frac >= 0.0)) {
        throw std::invalid_argument("excitation: noise fractions must be >= 0");
    }
    if (!(h0 < 0.0)) throw std::invalid_argument("excitation: h0 must be negative");
    if (!(et0_peak >= 0.0)) throw std::invalid_argument("excitation: et0_peak must be >= 0");
    if (!(u_scale > 0.0)) throw std::invalid_argument("excitation: u_scale must be positive");
}

void TrainSection::validate() const {
    sub.validate();
    agg.validate();
    baseline.validate();
}

void SurrogateSection::validate() const {
    if (window < 1 || units < 1 || m3_layers < 1 || agg_units < 1 || baseline_units < 0) {
        throw std::invalid_argument("surrogate: sizes must be positive");
    }
}

void MismatchSection::validate() const {
    if (!(a.lo <= a.hi) || !(b.lo <= b.hi)) throw std::invalid_argument("mismatch: empty parameter box");
    for (int f : bias_frequencies) {
        if (f < 1) throw std::invalid_argument("mismatch: bias frequencies must be >= 1");
    }
    for (int f : linear_frequencies) {
        if (f < 2) throw std::invalid_argument("mismatch: linear frequencies must be >= 2");
    }
}

SoilColumn PipelineConfig::make_column() const {
    IntegratorOptions opt;
    opt.max_substep = geometry.max_substep;
    return SoilColumn(soil.params, geometry.column, soil.stress, opt, soil.mean);
}

void PipelineConfig::validate() const {
    soil.params.validate();
    soil.stress.validate();
    geometry.column.validate();
    if (!(geometry.max_substep > 0.0)) throw std::invalid_argument("geometry: max_substep must be positive");
    excitation.validate();
    train.validate();
    surrogate.validate();
    mismatch.validate();
    run.run.zone.validate();
    run.run.zmpc.validate();
    run.run.validate();
}

namespace {

const std::array<const char*, 8> kSections{"soil",      "geometry", "excitation", "train",
                                           "surrogate", "mismatch", "zmpc",       "run"};

std::string mean_name(ConductivityMean m) { return m == ConductivityMean::geometric ? "geometric" : "arithmetic"; }

ConductivityMean mean_from(const std::string& s) {
    if (s == "arithmetic") return ConductivityMean::arithmetic;
    if (s == "geometric") return ConductivityMean::geometric;
    throw std::invalid_argument("unknown conductivity mean `" + s + "`");
}

std::string noise_name(NoiseKind k) { return k == NoiseKind::gaussian ? "gaussian" : "uniform"; }

NoiseKind noise_from(const std::string& s) {
    if (s == "uniform") return NoiseKind::uniform;
    if (s == "gaussian") return NoiseKind::gaussian;
    throw std::invalid_argument("unknown noise kind `" + s + "`");
}

struct KeyDef {
    std::string section;
    std::string key;  // dotted for nested maps
    std::string doc;
    std::function<void(PipelineConfig&, const YAML::Node&)> read;
    std::function<YAML::Node(const PipelineConfig&)> write;
};

std::string shortest(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <typename T>
YAML::Node to_node(const T& v) {
    if constexpr (std::is_same_v<T, double>) {
        return YAML::Node(shortest(v));
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
        YAML::Node n(YAML::NodeType::Sequence);
        for (double x : v) n.push_back(shortest(x));
        return n;
    } else {
        return YAML::Node(v);
    }
}

template <typename T, typename Get>
KeyDef scalar(std::string section, std::string key, std::string doc, Get get) {
    return KeyDef{std::move(section), std::move(key), std::move(doc),
                  [get](PipelineConfig& c, const YAML::Node& n) { get(c) = n.as<T>(); },
                  [get](const PipelineConfig& c) {
                      PipelineConfig copy = c;
                      return to_node<T>(get(copy));
                  }};
}

template <typename Get>
KeyDef size_key(std::string section, std::string key, std::string doc, Get get) {
    return KeyDef{std::move(section), std::move(key), std::move(doc),
                  [get](PipelineConfig& c, const YAML::Node& n) {
                      const long long v = n.as<long long>();
                      if (v < 0) throw std::invalid_argument("must be >= 0");
                      get(c) = static_cast<std::size_t>(v);
                  },
                  [get](const PipelineConfig& c) {
                      PipelineConfig copy = c;
                      return YAML::Node(static_cast<unsigned long long>(get(copy)));
                  }};
}

template <typename Get, typename From, typename To>
KeyDef enum_key(std::string section, std::string key, std::string doc, Get get, From from, To to) {
    return KeyDef{std::move(section), std::move(key), std::move(doc),
                  [get, from](PipelineConfig& c, const YAML::Node& n) { get(c) = from(n.as<std::string>()); },
                  [get, to](const PipelineConfig& c) {
                      PipelineConfig copy = c;
                      return YAML::Node(to(get(copy)));
                  }};
}

void add_train_keys(std::vector<KeyDef>& defs, const std::string& which, TrainConfig TrainSection::*member) {
    auto tc = [member](PipelineConfig& c) -> TrainConfig& { return c.train.*member; };
    defs.push_back(scalar<int>("train", which + ".epochs", "training epochs",
                               [tc](PipelineConfig& c) -> int& { return tc(c).epochs; }));
    defs.push_back(scalar<int>("train", which + ".batch_size", "mini-batch size",
                               [tc](PipelineConfig& c) -> int& { return tc(c).batch_size; }));
    defs.push_back(scalar<double>("train", which + ".learning_rate", "Adam step size",
                                  [tc](PipelineConfig& c) -> double& { return tc(c).learning_rate; }));
    defs.push_back(scalar<double>("train", which + ".beta1", "Adam first-moment decay",
                                  [tc](PipelineConfig& c) -> double& { return tc(c).beta1; }));
    defs.push_back(scalar<double>("train", which + ".beta2", "Adam second-moment decay",
                                  [tc](PipelineConfig& c) -> double& { return tc(c).beta2; }));
    defs.push_back(scalar<double>("train", which + ".epsilon", "Adam denominator offset",
                                  [tc](PipelineConfig& c) -> double& { return tc(c).epsilon; }));
    defs.push_back(scalar<double>("train", which + ".validation_split", "held-out fraction for model selection",
                                  [tc](PipelineConfig& c) -> double& { return tc(c).validation_split; }));
    defs.push_back(scalar<std::uint64_t>("train", which + ".seed", "shuffle and initialization seed",
                                         [tc](PipelineConfig& c) -> std::uint64_t& { return tc(c).seed; }));
    defs.push_back(scalar<int>("train", which + ".patience", "early stop after this many flat epochs (0 = off)",
                               [tc](PipelineConfig& c) -> int& { return tc(c).patience; }));
}

std::vector<KeyDef> build_registry() {
    using C = PipelineConfig;
    std::vector<KeyDef> d;
    // soil
    d.push_back(scalar<double>("soil", "ks", "saturated hydraulic conductivity [m/s]",
                               [](C& c) -> double& { return c.soil.params.ks; }));
    d.push_back(scalar<double>("soil", "theta_s", "saturated water content [m3/m3]",
                               [](C& c) -> double& { return c.soil.params.theta_s; }));
    d.push_back(scalar<double>("soil", "theta_r", "residual water content [m3/m3]",
                               [](C& c) -> double& { return c.soil.params.theta_r; }));
    d.push_back(scalar<double>("soil", "alpha", "van Genuchten alpha [1/m]",
                               [](C& c) -> double& { return c.soil.params.alpha; }));
    d.push_back(scalar<double>("soil", "n", "van Genuchten n", [](C& c) -> double& { return c.soil.params.n; }));
    d.push_back(scalar<double>("soil", "m", "van Genuchten m (informational, relations use 1 - 1/n)",
                               [](C& c) -> double& { return c.soil.params.m; }));
    d.push_back(scalar<double>("soil", "stress_h1", "water stress: anaerobiosis point [m]",
                               [](C& c) -> double& { return c.soil.stress.h1; }));
    d.push_back(scalar<double>("soil", "stress_h2", "water stress: start of plateau [m]",
                               [](C& c) -> double& { return c.soil.stress.h2; }));
    d.push_back(scalar<double>("soil", "stress_h3", "water stress: end of plateau [m]",
                               [](C& c) -> double& { return c.soil.stress.h3; }));
    d.push_back(scalar<double>("soil", "stress_h4", "water stress: wilting point [m]",
                               [](C& c) -> double& { return c.soil.stress.h4; }));
    d.push_back(enum_key("soil", "conductivity_mean", "inter-node conductivity: arithmetic | geometric",
                         [](C& c) -> ConductivityMean& { return c.soil.mean; }, mean_from, mean_name));
    // geometry
    d.push_back(scalar<double>("geometry", "depth", "column depth [m]",
                               [](C& c) -> double& { return c.geometry.column.total_depth; }));
    d.push_back(scalar<int>("geometry", "nodes", "number of nodes",
                            [](C& c) -> int& { return c.geometry.column.n_nodes; }));
    d.push_back(scalar<double>("geometry", "root_depth", "rooting depth |z_r| [m]",
                               [](C& c) -> double& { return c.geometry.column.root_depth; }));
    d.push_back(scalar<double>("geometry", "max_substep", "largest implicit sub-step [s]",
                               [](C& c) -> double& { return c.geometry.max_substep; }));
    // excitation
    for (int m = 0; m < 3; ++m) {
        const std::string name = "m" + std::to_string(m + 1);
        d.push_back(scalar<std::vector<double>>("excitation", name + "_levels", "held input levels of " + name + " [m/s]",
                                                [m](C& c) -> std::vector<double>& { return c.excitation.sub_levels[m]; }));
        d.push_back(scalar<double>("excitation", name + "_start_output", "initial output of the " + name + " run [m3/m3]",
                                   [m](C& c) -> double& { return c.excitation.sub_start_output[m]; }));
    }
    d.push_back(scalar<int>("excitation", "sub_min_hold", "shortest sub-model hold [samples]",
                            [](C& c) -> int& { return c.excitation.sub_min_hold; }));
    d.push_back(scalar<int>("excitation", "sub_max_hold", "longest sub-model hold [samples]",
                            [](C& c) -> int& { return c.excitation.sub_max_hold; }));
    d.push_back(size_key("excitation", "sub_length", "samples per sub-model dataset",
                         [](C& c) -> std::size_t& { return c.excitation.sub_length; }));
    d.push_back(size_key("excitation", "sub_validation_length", "samples per sub-model validation set",
                         [](C& c) -> std::size_t& { return c.excitation.sub_validation_length; }));
    d.push_back(scalar<std::vector<double>>("excitation", "agg_levels", "impulse amplitudes [m/s]",
                                            [](C& c) -> std::vector<double>& { return c.excitation.agg_levels; }));
    d.push_back(scalar<int>("excitation", "agg_min_hold", "shortest impulse spacing [samples]",
                            [](C& c) -> int& { return c.excitation.agg_min_hold; }));
    d.push_back(scalar<int>("excitation", "agg_max_hold", "longest impulse spacing [samples]",
                            [](C& c) -> int& { return c.excitation.agg_max_hold; }));
    d.push_back(size_key("excitation", "agg_length", "samples in the aggregator dataset",
                         [](C& c) -> std::size_t& { return c.excitation.agg_length; }));
    d.push_back(size_key("excitation", "impulse_length", "samples in the impulse run mined for sub-model windows",
                         [](C& c) -> std::size_t& { return c.excitation.impulse_length; }));
    d.push_back(size_key("excitation", "validation_length", "samples in the full-range validation set",
                         [](C& c) -> std::size_t& { return c.excitation.validation_length; }));
    d.push_back(scalar<double>("excitation", "noise_frac", "training output noise, fraction of the output range",
                               [](C& c) -> double& { return c.excitation.noise_frac; }));
    d.push_back(scalar<double>("excitation", "validation_noise_frac", "validation output noise fraction",
                               [](C& c) -> double& { return c.excitation.validation_noise_frac; }));
    d.push_back(enum_key("excitation", "noise_kind", "output noise: uniform | gaussian",
                         [](C& c) -> NoiseKind& { return c.excitation.noise_kind; }, noise_from, noise_name));
    d.push_back(scalar<double>("excitation", "h0", "initial potential of impulse and validation runs [m]",
                               [](C& c) -> double& { return c.excitation.h0; }));
    d.push_back(scalar<double>("excitation", "et0_peak", "background diurnal ET0 peak [m/s]",
                               [](C& c) -> double& { return c.excitation.et0_peak; }));
    d.push_back(scalar<double>("excitation", "u_scale", "input scaling bound of every network [m/s]",
                               [](C& c) -> double& { return c.excitation.u_scale; }));
    // train
    add_train_keys(d, "sub", &TrainSection::sub);
    add_train_keys(d, "agg", &TrainSection::agg);
    add_train_keys(d, "baseline", &TrainSection::baseline);
    // surrogate
    d.push_back(scalar<int>("surrogate", "window", "history length p [samples]",
                            [](C& c) -> int& { return c.surrogate.window; }));
    d.push_back(scalar<int>("surrogate", "units", "LSTM units per sub-model layer",
                            [](C& c) -> int& { return c.surrogate.units; }));
    d.push_back(scalar<int>("surrogate", "m3_layers", "LSTM layers of M3",
                            [](C& c) -> int& { return c.surrogate.m3_layers; }));
    d.push_back(scalar<int>("surrogate", "agg_units", "aggregator hidden width",
                            [](C& c) -> int& { return c.surrogate.agg_units; }));
    d.push_back(scalar<int>("surrogate", "baseline_units", "single-LSTM width (0 = parameter-matched)",
                            [](C& c) -> int& { return c.surrogate.baseline_units; }));
    // mismatch
    d.push_back(scalar<double>("mismatch", "a_lo", "lower bound of the slope a",
                               [](C& c) -> double& { return c.mismatch.a.lo; }));
    d.push_back(scalar<double>("mismatch", "a_hi", "upper bound of the slope a",
                               [](C& c) -> double& { return c.mismatch.a.hi; }));
    d.push_back(scalar<double>("mismatch", "b_lo", "lower bound of the offset b2",
                               [](C& c) -> double& { return c.mismatch.b.lo; }));
    d.push_back(scalar<double>("mismatch", "b_hi", "upper bound of the offset b2",
                               [](C& c) -> double& { return c.mismatch.b.hi; }));
    d.push_back(scalar<std::vector<int>>("mismatch", "bias_frequencies", "update periods evaluated for the bias",
                                         [](C& c) -> std::vector<int>& { return c.mismatch.bias_frequencies; }));
    d.push_back(scalar<std::vector<int>>("mismatch", "linear_frequencies", "update periods evaluated for the linear map",
                                         [](C& c) -> std::vector<int>& { return c.mismatch.linear_frequencies; }));
    // zmpc
    d.push_back(scalar<double>("zmpc", "q", "zone-tracking weight Q", [](C& c) -> double& { return c.run.run.zmpc.q; }));
    d.push_back(scalar<double>("zmpc", "r", "input weight R", [](C& c) -> double& { return c.run.run.zmpc.r; }));
    d.push_back(KeyDef{"zmpc", "horizon", "prediction horizon N [steps]",
                       [](C& c, const YAML::Node& n) {
                           c.run.run.zmpc.horizon = n.as<int>();
                           c.run.run.zone.horizon = c.run.run.zmpc.horizon;
                       },
                       [](const C& c) { return YAML::Node(c.run.run.zmpc.horizon); }});
    d.push_back(scalar<double>("zmpc", "mu", "zone shrink rate", [](C& c) -> double& { return c.run.run.zone.mu; }));
    d.push_back(scalar<double>("zmpc", "zone_init_lo", "initial lower zone bound [m3/m3]",
                               [](C& c) -> double& { return c.run.run.zone.y_lo_init; }));
    d.push_back(scalar<double>("zmpc", "zone_init_hi", "initial upper zone bound [m3/m3]",
                               [](C& c) -> double& { return c.run.run.zone.y_hi_init; }));
    d.push_back(scalar<double>("zmpc", "zone_term_lo", "terminal lower zone bound [m3/m3]",
                               [](C& c) -> double& { return c.run.run.zone.y_lo_term; }));
    d.push_back(scalar<double>("zmpc", "zone_term_hi", "terminal upper zone bound [m3/m3]",
                               [](C& c) -> double& { return c.run.run.zone.y_hi_term; }));
    d.push_back(scalar<double>("zmpc", "u_max_mps", "irrigation rate of a scaled input of 1 [m/s]",
                               [](C& c) -> double& { return c.run.run.zmpc.u_max; }));
    d.push_back(scalar<int>("zmpc", "restarts", "extra starting points per solve",
                            [](C& c) -> int& { return c.run.run.zmpc.restarts; }));
    d.push_back(scalar<int>("zmpc", "iters", "projected-gradient iterations per start",
                            [](C& c) -> int& { return c.run.run.zmpc.iterations; }));
    d.push_back(scalar<double>("zmpc", "y_min", "soft lower output bound [m3/m3]",
                               [](C& c) -> double& { return c.run.run.zmpc.y_min; }));
    d.push_back(scalar<double>("zmpc", "y_max", "soft upper output bound [m3/m3]",
                               [](C& c) -> double& { return c.run.run.zmpc.y_max; }));
    d.push_back(scalar<double>("zmpc", "penalty_factor", "output-bound weight relative to Q",
                               [](C& c) -> double& { return c.run.run.zmpc.penalty_factor; }));
    d.push_back(scalar<double>("zmpc", "step_tolerance", "stop when the projected step falls below this",
                               [](C& c) -> double& { return c.run.run.zmpc.step_tolerance; }));
    // run
    d.push_back(scalar<std::string>("run", "label", "row label", [](C& c) -> std::string& { return c.run.run.label; }));
    d.push_back(scalar<int>("run", "n_sim", "closed-loop steps", [](C& c) -> int& { return c.run.run.n_sim; }));
    d.push_back(scalar<double>("run", "dt", "sampling time [s]", [](C& c) -> double& { return c.run.run.dt; }));
    d.push_back(scalar<double>("run", "h0", "uniform initial potential [m]",
                               [](C& c) -> double& { return c.run.run.h0; }));
    d.push_back(enum_key("run", "plant", "plant: richards | surrogate", [](C& c) -> PlantModel& { return c.run.run.plant; },
                         plant_model_from_string, [](PlantModel m) { return to_string(m); }));
    d.push_back(enum_key("run", "controller", "controller model: richards | single_lstm | two_layer",
                         [](C& c) -> ControllerModel& { return c.run.run.controller; }, controller_model_from_string,
                         [](ControllerModel m) { return to_string(m); }));
    d.push_back(enum_key("run", "correction", "mismatch correction: none | bias | linear",
                         [](C& c) -> CorrectionKind& { return c.run.run.correction; }, correction_kind_from_string,
                         [](CorrectionKind k) { return to_string(k); }));
    d.push_back(scalar<int>("run", "correction_f", "correction update period [steps]",
                            [](C& c) -> int& { return c.run.run.correction_f; }));
    d.push_back(scalar<bool>("run", "warm_start", "seed each solve with the shifted previous plan",
                             [](C& c) -> bool& { return c.run.run.warm_start; }));
    d.push_back(enum_key("run", "scenario", "weather: calm | dry | rain",
                         [](C& c) -> ScenarioKind& { return c.run.run.scenario.kind; }, scenario_kind_from_string,
                         [](ScenarioKind k) { return to_string(k); }));
    d.push_back(scalar<double>("run", "et0_peak", "diurnal ET0 peak [m/s]",
                               [](C& c) -> double& { return c.run.run.scenario.et0_peak; }));
    d.push_back(scalar<double>("run", "rain_peak", "rain event peak [m/s]",
                               [](C& c) -> double& { return c.run.run.scenario.rain_peak; }));
    d.push_back(scalar<double>("run", "kc", "crop coefficient", [](C& c) -> double& { return c.run.run.scenario.kc; }));
    d.push_back(scalar<double>("run", "forecast_error", "relative forecast error",
                               [](C& c) -> double& { return c.run.run.scenario.forecast_error; }));
    d.push_back(scalar<double>("run", "process_noise", "relative root-node perturbation per step",
                               [](C& c) -> double& { return c.run.run.noise.process_frac; }));
    d.push_back(scalar<double>("run", "measurement_noise", "relative measurement perturbation",
                               [](C& c) -> double& { return c.run.run.noise.measurement_frac; }));
    d.push_back(KeyDef{"run", "seed", "noise and forecast seed (overridden by --seed)",
                       [](C& c, const YAML::Node& n) {
                           c.run.run.noise.seed = n.as<std::uint64_t>();
                           c.run.run.scenario.seed = c.run.run.noise.seed;
                       },
                       [](const C& c) { return YAML::Node(c.run.run.noise.seed); }});
    d.push_back(scalar<bool>("run", "benchmark", "reference row of a battery",
                             [](C& c) -> bool& { return c.run.benchmark; }));
    d.push_back(KeyDef{"run", "models", "trained model directory (empty: <out>/models)",
                       [](C& c, const YAML::Node& n) { c.run.models = n.as<std::string>(); },
                       [](const C& c) { return YAML::Node(c.run.models.string()); }});
    return d;
}

const std::vector<KeyDef>& registry() {
    static const std::vector<KeyDef> defs = build_registry();
    return defs;
}

std::string where(const YAML::Node& n) {
    const YAML::Mark m = n.Mark();
    return m.is_null() ? std::string{} : "line " + std::to_string(m.line + 1) + ": ";
}

void flatten(const YAML::Node& map, const std::string& prefix, std::vector<std::pair<std::string, YAML::Node>>& out) {
    for (const auto& kv : map) {
        const std::string key = prefix + kv.first.as<std::string>();
        if (kv.second.IsMap()) {
            flatten(kv.second, key + ".", out);
        } else {
            out.emplace_back(key, kv.second);
        }
    }
}

void set_nested(YAML::Node section, const std::string& key, const YAML::Node& value) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
        section[key] = value;
        return;
    }
    YAML::Node child = section[key.substr(0, dot)];
    set_nested(child, key.substr(dot + 1), value);
}

}  // namespace

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    if (!root.IsMap()) throw ConfigError("config must be a map of sections");

    for (const auto& kv : root) {
        const std::string name = kv.first.as<std::string>();
        if (std::find(kSections.begin(), kSections.end(), name) == kSections.end()) {
            throw ConfigError(where(kv.first) + "unknown section `" + name + "`");
        }
        if (!kv.second.IsMap() && !kv.second.IsNull()) {
            throw ConfigError(where(kv.second) + "section `" + name + "` must be a map");
        }
    }

    PipelineConfig c;
    for (const char* section : kSections) {
        const YAML::Node node = root[section];
        if (!node) throw ConfigError("missing section `" + std::string(section) + "`");
        if (node.IsNull()) continue;
        std::vector<std::pair<std::string, YAML::Node>> entries;
        flatten(node, "", entries);
        for (const auto& [key, value] : entries) {
            const auto it = std::find_if(registry().begin(), registry().end(),
                                         [&](const KeyDef& k) { return k.section == section && k.key == key; });
            if (it == registry().end()) {
                throw ConfigError(where(value) + "unknown key `" + std::string(section) + "." + key + "`");
            }
            try {
                it->read(c, value);
            } catch (const YAML::Exception& e) {
                throw ConfigError(where(value) + "bad value for `" + std::string(section) + "." + key + "`");
            } catch (const std::exception& e) {
                throw ConfigError(where(value) + std::string(section) + "." + key + ": " + e.what());
            }
        }
    }
    if (!c.run.models.empty() && c.run.models.is_relative() && !base_dir.empty()) {
        c.run.models = base_dir / c.run.models;
    }
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!c.run.models.empty() && !std::filesystem::is_directory(c.run.models)) {
        throw ConfigError("run.models: directory `" + c.run.models.string() + "` does not exist");
    }
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config `" + path.string() + "`");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str(), path.parent_path());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string dump_config(const PipelineConfig& config) {
    YAML::Node root;
    for (const char* section : kSections) root[section] = YAML::Node(YAML::NodeType::Map);
    for (const KeyDef& k : registry()) {
        YAML::Node section = root[k.section];
        set_nested(section, k.key, k.write(config));
    }
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out.SetSeqFormat(YAML::Flow);
    out << root;
    return std::string(out.c_str()) + "\n";
}

std::string config_hash(const PipelineConfig& config) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : dump_config(config)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_reference() {
    const PipelineConfig defaults;
    std::ostringstream os;
    os << "Configuration keys (YAML; every section must be present, keys are optional):\n";
    std::string current;
    for (const KeyDef& k : registry()) {
        if (k.section != current) {
            current = k.section;
            os << "\n" << current << ":\n";
        }
        YAML::Emitter e;
        e.SetDoublePrecision(6);
        e.SetSeqFormat(YAML::Flow);
        e << k.write(defaults);
        std::string name = "  " + k.key;
        std::string value = e.c_str();
        if (name.size() < 28) name.resize(28, ' ');
        os << name << " " << k.doc << " (default " << value << ")\n";
    }
    return os.str();
}

}  // namespace irriloop
