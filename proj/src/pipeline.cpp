#include "irriloop/pipeline.hpp"

#include "irriloop/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

namespace irriloop {

namespace fs = std::filesystem;

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void RunManifest::write(const fs::path& path) const {
    nlohmann::json j;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["scale"] = scale;
    j["tool_version"] = tool_version;
    j["started"] = started;
    j["finished"] = finished;
    std::vector<std::string> paths;
    for (const auto& a : artifacts) paths.push_back(a.string());
    j["artifacts"] = paths;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

fs::path CommandContext::models_dir() const {
    return config.run.models.empty() ? out / "models" : config.run.models;
}

SimulationSetup make_setup(const PipelineConfig& config, double h0) {
    SimulationSetup s;
    s.column = config.make_column();
    s.initial = s.column.uniform_state(h0);
    s.weather = dry_weather(12, config.excitation.et0_peak, 1.0, config.run.run.dt);
    s.dt = config.run.run.dt;
    return s;
}

ScalingSpec pipeline_scaler(const PipelineConfig& config) { return fit_scaler(config.excitation.u_scale); }

namespace {

// Seed offsets of the individual datasets relative to the command seed.
constexpr std::uint64_t kSubPrsSeed = 10, kSubNoiseSeed = 20;
constexpr std::uint64_t kAggPrsSeed = 50, kAggNoiseSeed = 51;
constexpr std::uint64_t kValPrsSeed = 60, kValNoiseSeed = 61;
constexpr std::uint64_t kImpulsePrsSeed = 70, kImpulseNoiseSeed = 71;
constexpr std::uint64_t kSubValPrsSeed = 100, kSubValNoiseSeed = 200;

std::size_t scaled(std::size_t length, int scale) {
    if (scale < 1) throw std::invalid_argument("scale must be >= 1");
    return std::max<std::size_t>(length / static_cast<std::size_t>(scale), 1);
}

PrsSpec sub_spec(const PipelineConfig& c, int m, std::size_t length, std::uint64_t seed) {
    return PrsSpec{c.excitation.sub_levels[m], c.excitation.sub_min_hold, c.excitation.sub_max_hold, length, seed,
                   PrsMode::held_levels};
}

PrsSpec impulse_spec(const PipelineConfig& c, std::size_t length, std::uint64_t seed) {
    return PrsSpec{c.excitation.agg_levels, c.excitation.agg_min_hold, c.excitation.agg_max_hold, length, seed,
                   PrsMode::impulse};
}

double start_potential(const PipelineConfig& c, int m) {
    return potential_from_water_content(c.excitation.sub_start_output[m], c.soil.params);
}

struct DatasetFile {
    std::string name;
    PrsSpec spec;
    std::uint64_t noise_seed;
    double noise_frac;
};

std::vector<DatasetFile> dataset_files(const PipelineConfig& c, std::uint64_t seed, int scale) {
    const auto& e = c.excitation;
    std::vector<DatasetFile> files;
    for (int m = 0; m < 3; ++m) {
        files.push_back({kSubModelNames[m], sub_spec(c, m, scaled(e.sub_length, scale), seed + kSubPrsSeed + m),
                         seed + kSubNoiseSeed + m, e.noise_frac});
    }
    files.push_back({"agg", impulse_spec(c, scaled(e.agg_length, scale), seed + kAggPrsSeed), seed + kAggNoiseSeed,
                     e.noise_frac});
    files.push_back({"impulse", impulse_spec(c, scaled(e.impulse_length, scale), seed + kImpulsePrsSeed),
                     seed + kImpulseNoiseSeed, e.noise_frac});
    files.push_back({"validation", impulse_spec(c, scaled(e.validation_length, scale), seed + kValPrsSeed),
                     seed + kValNoiseSeed, e.validation_noise_frac});
    for (int m = 0; m < 3; ++m) {
        files.push_back({std::string(kSubModelNames[m]) + "_validation",
                         sub_spec(c, m, scaled(e.sub_validation_length, scale), seed + kSubValPrsSeed + m),
                         seed + kSubValNoiseSeed + m, e.validation_noise_frac});
    }
    return files;
}

Dataset& slot(DatasetBundle& b, const std::string& name) {
    for (int m = 0; m < 3; ++m) {
        if (name == kSubModelNames[m]) return b.sub[m];
        if (name == std::string(kSubModelNames[m]) + "_validation") return b.sub_validation[m];
    }
    if (name == "agg") return b.agg;
    if (name == "impulse") return b.impulse;
    if (name == "validation") return b.validation;
    throw std::invalid_argument("unknown dataset `" + name + "`");
}

int sub_index(const std::string& name) {
    for (int m = 0; m < 3; ++m) {
        if (name.rfind(kSubModelNames[m], 0) == 0) return m;
    }
    return -1;
}

void write_loss_csv(const fs::path& path, const TrainResult& r) {
    CsvTable t;
    std::vector<double> epoch(r.train_loss.size());
    for (std::size_t k = 0; k < epoch.size(); ++k) epoch[k] = static_cast<double>(k);
    t.add_column("epoch", std::move(epoch));
    t.add_column("train_loss", r.train_loss);
    t.add_column("val_loss", r.val_loss);
    write_csv(path, t);
}

TrainConfig seeded(TrainConfig tc, std::uint64_t seed) {
    tc.seed += seed;
    return tc;
}

RunManifest start_manifest(const std::string& command, const CommandContext& ctx) {
    RunManifest m;
    m.command = command;
    m.config_hash = config_hash(ctx.config);
    m.seed = ctx.seed;
    m.scale = ctx.scale;
    m.started = utc_timestamp();
    return m;
}

std::vector<fs::path> finish_manifest(RunManifest& m, const fs::path& path) {
    m.finished = utc_timestamp();
    m.write(path);
    std::vector<fs::path> out = m.artifacts;
    out.push_back(path);
    return out;
}

DatasetBundle require_datasets(const CommandContext& ctx) {
    if (!fs::is_directory(ctx.data_dir())) {
        throw MissingInputError("no datasets in " + ctx.data_dir().string() + "; run datagen first");
    }
    return load_datasets(ctx.data_dir());
}

}  // namespace

DatasetBundle generate_datasets(const PipelineConfig& config, std::uint64_t seed, int scale) {
    DatasetBundle b;
    for (const DatasetFile& f : dataset_files(config, seed, scale)) {
        const int m = sub_index(f.name);
        const double h0 = m >= 0 ? start_potential(config, m) : config.excitation.h0;
        slot(b, f.name) = simulate_dataset(gen_prs(f.spec), make_setup(config, h0), f.noise_frac, f.noise_seed,
                                           config.excitation.noise_kind);
    }
    return b;
}

std::vector<fs::path> save_datasets(const fs::path& dir, const DatasetBundle& bundle, const PipelineConfig& config,
                                    std::uint64_t seed, int scale) {
    fs::create_directories(dir);
    std::vector<fs::path> written;
    DatasetBundle copy = bundle;
    for (const DatasetFile& f : dataset_files(config, seed, scale)) {
        const fs::path path = dir / (f.name + ".csv");
        save_dataset(path, slot(copy, f.name), DatasetMeta{f.noise_seed, f.spec, f.noise_frac, pipeline_scaler(config)});
        written.push_back(path);
    }
    return written;
}

DatasetBundle load_datasets(const fs::path& dir) {
    DatasetBundle b;
    const std::vector<std::string> names{"m1", "m2", "m3", "agg", "impulse", "validation",
                                         "m1_validation", "m2_validation", "m3_validation"};
    for (const auto& name : names) {
        const fs::path path = dir / (name + ".csv");
        if (!fs::exists(path)) throw MissingInputError("missing dataset " + path.string());
        slot(b, name) = load_dataset(path);
    }
    return b;
}

SequenceSet sub_model_set(const PipelineConfig& config, int m, const DatasetBundle& data) {
    const auto p = static_cast<std::size_t>(config.surrogate.window);
    const ScalingSpec sc = pipeline_scaler(config);
    return interleave(windows_in_range(data.impulse, p, sc, kSubModelRanges[m]), window(data.sub[m], p, sc));
}

LstmModel train_sub_model(const PipelineConfig& config, int m, const DatasetBundle& data, std::uint64_t seed,
                          TrainResult* history) {
    const auto& s = config.surrogate;
    const NetworkSpec spec = sub_model_spec(m == 2 ? s.m3_layers : 1, s.units, s.window);
    return train_lstm_model(kSubModelNames[m], spec, sub_model_set(config, m, data), pipeline_scaler(config),
                            seeded(config.train.sub, seed), kSubModelRanges[m], history);
}

Network train_aggregator_model(const PipelineConfig& config, const std::vector<LstmModel>& bank,
                               const DatasetBundle& data, std::uint64_t seed, TrainResult* history) {
    return train_aggregator(bank, data.agg, pipeline_scaler(config).y, aggregator_spec(config.surrogate.agg_units),
                            seeded(config.train.agg, seed), history);
}

int baseline_units(const PipelineConfig& config) {
    const auto& s = config.surrogate;
    if (s.baseline_units > 0) return s.baseline_units;
    const auto budget = Network(sub_model_spec(1, s.units, s.window)).parameter_count() * 2 +
                        Network(sub_model_spec(s.m3_layers, s.units, s.window)).parameter_count() +
                        Network(aggregator_spec(s.agg_units)).parameter_count();
    return parameter_matched_units(static_cast<std::size_t>(budget), s.window);
}

LstmModel train_baseline_model(const PipelineConfig& config, const DatasetBundle& data, std::uint64_t seed,
                               TrainResult* history) {
    return train_lstm_model("baseline", baseline_spec(baseline_units(config), config.surrogate.window), data.agg,
                            pipeline_scaler(config), seeded(config.train.baseline, seed), {}, history);
}

ModelSet LoadedModels::model_set() const {
    ModelSet s;
    if (two_layer) s.two_layer = &*two_layer;
    if (baseline) s.single_lstm = &*baseline;
    return s;
}

LoadedModels load_models(const fs::path& dir) {
    LoadedModels out;
    for (int m = 0; m < 3; ++m) {
        const fs::path p = dir / (std::string(kSubModelNames[m]) + ".json");
        if (fs::exists(p)) out.sub[m] = LstmModel::load(p);
    }
    if (fs::exists(dir / "agg.json")) out.two_layer = TwoLayerSurrogate::load(dir);
    if (fs::exists(dir / "baseline.json")) out.baseline = LstmModel::load(dir / "baseline.json");
    return out;
}

NrmseTable validation_table(const LoadedModels& models, const DatasetBundle& data, const std::vector<int>& steps) {
    std::vector<const OneStepModel*> list;
    std::vector<const Dataset*> sets;
    for (int m = 0; m < 3; ++m) {
        if (models.sub[m]) {
            list.push_back(&*models.sub[m]);
            sets.push_back(&data.sub_validation[m]);
        }
    }
    if (models.two_layer) {
        list.push_back(&*models.two_layer);
        sets.push_back(&data.validation);
    }
    if (models.baseline) {
        list.push_back(&*models.baseline);
        sets.push_back(&data.validation);
    }
    if (list.empty()) throw MissingInputError("no trained models to validate");
    return validate_models(list, sets, steps);
}

std::vector<CorrectionRow> correction_table(const PipelineConfig& config, const OneStepModel& model,
                                            const Dataset& data) {
    const int n = config.run.run.zmpc.horizon;
    std::vector<CorrectionRow> rows;
    const double none = evaluate_correction(model, data, CorrectionKind::none, 1, n);
    rows.push_back({CorrectionKind::none, 0, none, 0.0});
    for (int f : config.mismatch.bias_frequencies) {
        if (!valid_frequency(CorrectionKind::single_bias, f, n)) continue;
        const double e = evaluate_correction(model, data, CorrectionKind::single_bias, f, n);
        rows.push_back({CorrectionKind::single_bias, f, e, percent_difference(none, e)});
    }
    for (int f : config.mismatch.linear_frequencies) {
        if (!valid_frequency(CorrectionKind::linear, f, n)) continue;
        const double e = evaluate_correction(model, data, CorrectionKind::linear, f, n);
        rows.push_back({CorrectionKind::linear, f, e, percent_difference(none, e)});
    }
    return rows;
}

void write_correction_csv(const fs::path& path, const std::vector<CorrectionRow>& rows) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        cells.push_back({to_string(r.kind), std::to_string(r.f), format_double(r.error, 10),
                         format_double(r.diff_pct, 6)});
    }
    write_text_csv(path, {"kind", "f", "mean_abs_error", "diff_pct"}, cells);
}

void write_metrics_csv(const fs::path& path, const RunMetrics& m) {
    write_text_csv(path,
                   {"label", "I_T_mm", "zone_violation", "mean_solve_s", "mass_balance_error", "steps", "failed",
                    "error"},
                   {{m.label, format_double(m.irrigation_mm, 10), format_double(m.zone_violation, 10),
                     format_double(m.mean_solve_seconds, 6), format_double(m.mass_balance_error, 6),
                     std::to_string(m.log.size()), m.failed ? "1" : "0", "\"" + m.error + "\""}});
}

std::vector<fs::path> cmd_datagen(const CommandContext& ctx) {
    RunManifest man = start_manifest("datagen", ctx);
    const DatasetBundle b = generate_datasets(ctx.config, ctx.seed, ctx.scale);
    man.artifacts = save_datasets(ctx.data_dir(), b, ctx.config, ctx.seed, ctx.scale);
    return finish_manifest(man, ctx.data_dir() / "manifest.json");
}

std::vector<fs::path> cmd_train(const CommandContext& ctx, const std::string& which) {
    const int m = which.size() == 2 ? sub_index(which) : -1;
    if (m < 0 && which != "agg" && which != "baseline") {
        throw std::invalid_argument("train: unknown model `" + which + "` (m1, m2, m3, agg, baseline)");
    }
    const fs::path dir = ctx.models_dir();
    std::vector<LstmModel> bank;
    if (which == "agg") {
        for (const char* name : kSubModelNames) {
            const fs::path p = dir / (std::string(name) + ".json");
            if (!fs::exists(p)) throw MissingInputError("train agg: " + p.string() + " missing; train m1, m2 and m3 first");
            bank.push_back(LstmModel::load(p));
        }
    }
    const DatasetBundle data = require_datasets(ctx);
    RunManifest man = start_manifest("train " + which, ctx);
    fs::create_directories(dir);
    TrainResult history;
    const fs::path model_path = dir / (which + ".json");
    if (m >= 0) {
        train_sub_model(ctx.config, m, data, ctx.seed, &history);
        LstmModel(which, history.network, pipeline_scaler(ctx.config), kSubModelRanges[m]).save(model_path);
    } else if (which == "agg") {
        const Network agg = train_aggregator_model(ctx.config, bank, data, ctx.seed, &history);
        TwoLayerSurrogate(bank, agg, pipeline_scaler(ctx.config).y).save(dir);
    } else {
        train_baseline_model(ctx.config, data, ctx.seed, &history).save(model_path);
    }
    const fs::path loss_path = dir / ("loss_" + which + ".csv");
    write_loss_csv(loss_path, history);
    man.artifacts = {model_path, loss_path};
    return finish_manifest(man, dir / ("manifest_" + which + ".json"));
}

std::vector<fs::path> cmd_validate(const CommandContext& ctx) {
    const DatasetBundle data = require_datasets(ctx);
    const LoadedModels models = load_models(ctx.models_dir());
    RunManifest man = start_manifest("validate", ctx);
    fs::create_directories(ctx.out);
    const fs::path path = ctx.out / "nrmse.csv";
    write_nrmse_table(path, validation_table(models, data, {1, 10, 20}));
    man.artifacts = {path};
    return finish_manifest(man, ctx.out / "manifest_validate.json");
}

std::vector<fs::path> cmd_correct_eval(const CommandContext& ctx) {
    const DatasetBundle data = require_datasets(ctx);
    const LoadedModels models = load_models(ctx.models_dir());
    if (!models.two_layer) throw MissingInputError("correct-eval needs the trained two-layer model (train agg)");
    RunManifest man = start_manifest("correct-eval", ctx);
    fs::create_directories(ctx.out);
    const fs::path path = ctx.out / "correction.csv";
    write_correction_csv(path, correction_table(ctx.config, *models.two_layer, data.validation));
    man.artifacts = {path};
    return finish_manifest(man, ctx.out / "manifest_correct_eval.json");
}

namespace {

bool needs_models(const RunConfig& c) {
    return c.controller != ControllerModel::richards || c.plant == PlantModel::surrogate;
}

}  // namespace

std::vector<fs::path> cmd_zmpc_run(const CommandContext& ctx) {
    RunConfig rc = ctx.config.run.run;
    rc.noise.seed = ctx.seed;
    rc.scenario.seed = ctx.seed;
    LoadedModels models;
    if (needs_models(rc)) {
        if (!fs::is_directory(ctx.models_dir())) {
            throw MissingInputError("no model directory " + ctx.models_dir().string());
        }
        models = load_models(ctx.models_dir());
    }
    RunManifest man = start_manifest("zmpc-run", ctx);
    const RunMetrics m = run_closed_loop(rc, ctx.config.make_column(), models.model_set());
    fs::create_directories(ctx.out);
    const fs::path traj = ctx.out / "trajectory.csv", metrics = ctx.out / "metrics.csv";
    write_trajectory_csv(traj, m);
    write_metrics_csv(metrics, m);
    man.artifacts = {traj, metrics};
    auto out = finish_manifest(man, ctx.out / "manifest_zmpc_run.json");
    if (m.failed) throw std::runtime_error("closed loop failed at step " + std::to_string(m.log.size()) + ": " + m.error);
    return out;
}

std::vector<fs::path> cmd_battery(const fs::path& configs_dir, const fs::path& report_csv,
                                  const std::optional<std::uint64_t>& seed, const fs::path& models_dir) {
    if (!fs::is_directory(configs_dir)) throw MissingInputError("no config directory " + configs_dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(configs_dir)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".yaml" || ext == ".yml")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw MissingInputError("no *.yaml configs in " + configs_dir.string());

    std::vector<PipelineConfig> configs;
    for (const auto& f : files) configs.push_back(load_config(f));
    std::vector<RunConfig> runs;
    std::size_t benchmark = 0;
    bool found = false;
    bool models_needed = false;
    for (std::size_t k = 0; k < configs.size(); ++k) {
        RunConfig rc = configs[k].run.run;
        if (rc.label == "run") rc.label = files[k].stem().string();
        if (seed) {
            rc.noise.seed = *seed;
            rc.scenario.seed = *seed;
        }
        models_needed = models_needed || needs_models(rc);
        if (configs[k].run.benchmark && !found) {
            benchmark = k;
            found = true;
        }
        runs.push_back(rc);
    }
    fs::path mdir = models_dir;
    if (mdir.empty()) mdir = configs.front().run.models;
    LoadedModels models;
    if (models_needed) {
        if (mdir.empty() || !fs::is_directory(mdir)) {
            throw MissingInputError("battery needs trained models; pass --models or set run.models");
        }
        models = load_models(mdir);
    }

    RunManifest man;
    man.command = "battery";
    man.config_hash = config_hash(configs.front());
    man.seed = runs.front().noise.seed;
    man.started = utc_timestamp();
    auto rows = scenario_battery(runs, configs.front().make_column(), models.model_set(), benchmark);
    for (std::size_t k = 0; k < rows.size(); ++k) rows[k].config_hash = config_hash(configs[k]);
    if (report_csv.has_parent_path()) fs::create_directories(report_csv.parent_path());
    write_battery_csv(report_csv, rows);
    man.artifacts = {report_csv};
    fs::path manifest = report_csv;
    manifest.replace_extension(".manifest.json");
    return finish_manifest(man, manifest);
}

namespace {

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

bool is_battery(const TextTable& t) {
    return t.header.size() >= 2 && t.header[0] == "label" && t.header[1] == "controller";
}

}  // namespace

std::vector<fs::path> cmd_report(const fs::path& in_dir, const fs::path& out_dir) {
    if (!fs::is_directory(in_dir)) throw MissingInputError("no input directory " + in_dir.string());
    std::vector<fs::path> csvs;
    for (const auto& e : fs::directory_iterator(in_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") csvs.push_back(e.path());
    }
    std::sort(csvs.begin(), csvs.end());

    std::ostringstream md;
    std::vector<std::vector<std::string>> summary;
    bool any = false;
    md << "# Results\n";

    const fs::path nrmse_path = in_dir / "nrmse.csv";
    if (fs::exists(nrmse_path)) {
        any = true;
        const TextTable t = read_text_csv(nrmse_path);
        md << "\n## Open-loop NRMSE\n\n|";
        for (const auto& h : t.header) md << " " << h << " |";
        const bool delta = std::find(t.header.begin(), t.header.end(), "two_layer") != t.header.end() &&
                           std::find(t.header.begin(), t.header.end(), "baseline") != t.header.end();
        if (delta) md << " delta_pct |";
        md << "\n|";
        for (std::size_t c = 0; c < t.header.size() + (delta ? 1 : 0); ++c) md << "---|";
        md << "\n";
        for (const auto& row : t.rows) {
            md << "|";
            for (std::size_t c = 0; c < row.size(); ++c) {
                md << " " << row[c] << " |";
                if (c > 0) summary.push_back({"nrmse", row[0], t.header[c], row[c]});
            }
            if (delta) {
                const double d = percent_difference(std::stod(row[t.index("baseline")]),
                                                    std::stod(row[t.index("two_layer")]));
                md << " " << fixed(d, 1) << " |";
                summary.push_back({"nrmse", row[0], "delta_pct", format_double(d, 6)});
            }
            md << "\n";
        }
    }

    const fs::path corr_path = in_dir / "correction.csv";
    if (fs::exists(corr_path)) {
        any = true;
        const TextTable t = read_text_csv(corr_path);
        md << "\n## Mismatch correction\n\n| kind | f | mean abs error | improvement % |\n|---|---|---|---|\n";
        for (const auto& row : t.rows) {
            md << "| " << row[t.index("kind")] << " | " << row[t.index("f")] << " | "
               << row[t.index("mean_abs_error")] << " | " << fixed(std::stod(row[t.index("diff_pct")]), 1) << " |\n";
            const std::string key = row[t.index("kind")] + "_f" + row[t.index("f")];
            summary.push_back({"correction", key, "mean_abs_error", row[t.index("mean_abs_error")]});
            summary.push_back({"correction", key, "diff_pct", row[t.index("diff_pct")]});
        }
    }

    for (const auto& path : csvs) {
        const TextTable t = read_text_csv(path);
        if (!is_battery(t)) continue;
        any = true;
        const std::string name = path.stem().string();
        md << "\n## Closed loop: " << name << "\n\n"
           << "| label | controller | mu | I_T (mm) | I_T diff % | zone violation | violation diff % | solve (s) |\n"
           << "|---|---|---|---|---|---|---|---|\n";
        for (const auto& row : t.rows) {
            const bool failed = row[t.index("failed")] == "1";
            md << "| " << row[t.index("label")] << (failed ? " (failed)" : "") << " | " << row[t.index("controller")]
               << " | " << row[t.index("mu")] << " | " << fixed(std::stod(row[t.index("I_T_mm")]), 2) << " | "
               << fixed(std::stod(row[t.index("I_T_diff_pct")]), 1) << " | "
               << format_double(std::stod(row[t.index("zone_violation")]), 4) << " | "
               << fixed(std::stod(row[t.index("violation_diff_pct")]), 1) << " | "
               << format_double(std::stod(row[t.index("mean_solve_s")]), 3) << " |\n";
            for (const char* col : {"I_T_mm", "I_T_diff_pct", "zone_violation", "violation_diff_pct", "mean_solve_s"}) {
                summary.push_back({name, row[t.index("label")], col, row[t.index(col)]});
            }
        }
    }
    if (!any) throw MissingInputError("no nrmse.csv, correction.csv or battery CSV in " + in_dir.string());

    fs::create_directories(out_dir);
    const fs::path md_path = out_dir / "report.md", csv_path = out_dir / "summary.csv";
    std::ofstream out(md_path);
    if (!out) throw std::runtime_error("cannot write " + md_path.string());
    out << md.str();
    write_text_csv(csv_path, {"table", "row", "column", "value"}, summary);
    return {md_path, csv_path};
}

}  // namespace irriloop
