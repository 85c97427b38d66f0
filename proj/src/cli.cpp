#include "mapsed/cli.hpp"

#include "mapsed/dataset.hpp"
#include "mapsed/io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace mapsed::cli {

namespace fs = std::filesystem;

const std::vector<KeySpec>& known_keys() {
    static const std::vector<KeySpec> keys = {
        {"grid.h", "10", "grid rows (latitude)"},
        {"grid.w", "10", "grid columns (longitude)"},
        {"grid.m", "5", "input frames per sequence"},
        {"grid.n", "3", "forecast frames per sequence"},
        {"grid.interval_days", "7", "days per frame"},
        {"grid.num_categories", "4", "categories kept when grid.categories is unset"},
        {"grid.categories", "", "comma-separated category names"},
        {"grid.bbox", "", "lat_min,lat_max,lon_min,lon_max; default from the training period"},
        {"data.csv", "", "input event CSV"},
        {"data.timestamp_column", "timestamp", ""},
        {"data.latitude_column", "latitude", ""},
        {"data.longitude_column", "longitude", ""},
        {"data.category_column", "category", ""},
        {"data.timestamp_format", "", "strptime pattern; empty for ISO-8601"},
        {"data.period_start", "", "YYYY-MM-DD; default first event day"},
        {"data.period_end", "", "YYYY-MM-DD, exclusive; default covers the last event"},
        {"data.split", "0.7,0.1,0.2", "train,val,test frame ratios"},
        {"synth.generator", "diag", "diag (moving hotspot) or correlated"},
        {"synth.seed", "1", ""},
        {"synth.train_sequences", "8", ""},
        {"synth.val_sequences", "2", ""},
        {"synth.test_sequences", "4", ""},
        {"synth.mass", "5", "events per hotspot cell (diag)"},
        {"synth.max_offset", "", "largest diagonal offset (diag); default h-(m+n)"},
        {"synth.hotspots", "2", "hotspot cells per sequence (correlated)"},
        {"synth.rate", "3", "Poisson rate per hotspot (correlated)"},
        {"path.dataset", "", "dataset file"},
        {"path.checkpoint", "", "checkpoint file; default <out>/model.ckpt when training"},
        {"path.resume", "", "checkpoint to resume training from"},
        {"path.out", "out", "output directory"},
        {"model.encoder_layers", "2", ""},
        {"model.mab_inner", "0", "0 selects the default width"},
        {"model.bottleneck3d_inner", "0", "0 selects the default width"},
        {"model.activation", "relu", "relu or none"},
        {"model.adapter", "identity", "identity or vae"},
        {"vae.latent_channels", "4", ""},
        {"vae.hidden_channels", "8", ""},
        {"vae.epochs", "200", ""},
        {"vae.batch_size", "8", ""},
        {"vae.lr", "0.01", ""},
        {"vae.kl_weight", "1", ""},
        {"vae.seed", "7", ""},
        {"train.lr", "0.001", ""},
        {"train.epochs", "100", ""},
        {"train.batch_size", "4", ""},
        {"train.seed", "1", ""},
        {"train.optimizer", "adam", "sgd, momentum or adam"},
        {"train.augment", "false", "random flip and rotation per sequence"},
        {"train.patience", "0", "epochs without improvement before stopping; 0 disables"},
        {"train.fixed_contrast_samples", "false", "draw positives and negatives once"},
        {"train.max_steps", "", "optional cap on optimizer steps"},
        {"loss.lambda", "0.1", "L1 weight in the reconstruction loss"},
        {"loss.lambda_c", "0.1", "contrastive weight"},
        {"loss.omega", "1", "triplet margin"},
        {"loss.num_negatives", "4", ""},
        {"loss.contrast", "frobenius", "frobenius, dot or none"},
        {"eval.split", "test", "split to evaluate"},
        {"eval.postprocess", "clamp", "clamp, round or none"},
        {"eval.baseline", "none", "none, history, lr or all"},
        {"eval.probe", "none", "none, rotation, semantics, dynamics or all"},
        {"eval.turns", "2", "quarter turns for the rotation probe"},
        {"eval.category", "0", "target category of the semantics probe"},
        {"eval.offset", "0", "diagonal offset of the dynamics stimulus"},
        {"eval.mass", "5", "hotspot mass of the dynamics stimulus"},
        {"eval.ridge", "1e-6", "ridge damping of the linear baseline"},
    };
    return keys;
}

namespace {

const KeySpec* find_key(const std::string& key) {
    for (const KeySpec& k : known_keys())
        if (key == k.key) return &k;
    return nullptr;
}

void require_known(const std::string& key) {
    if (!find_key(key)) throw ConfigError("unknown configuration key '" + key + "'");
}

/// Effective values with empty (unset) entries removed.
KeyValues effective(const RunConfig& cfg) {
    KeyValues out;
    const KeyValues all = cfg.echo();
    for (const auto& [k, v] : all.entries())
        if (!v.empty()) out.set(k, v);
    return out;
}

std::vector<std::string> non_empty_list(const std::string& text) {
    std::vector<std::string> out;
    for (const std::string& s : split_list(text))
        if (!s.empty()) out.push_back(s);
    return out;
}

std::array<double, 3> parse_ratios(const std::string& text) {
    const auto parts = non_empty_list(text);
    if (parts.size() != 3) throw ConfigError("data.split needs three comma-separated ratios");
    return {parse_double("data.split", parts[0]), parse_double("data.split", parts[1]),
            parse_double("data.split", parts[2])};
}

std::optional<BoundingBox> parse_bbox(const std::string& text) {
    if (text.empty()) return std::nullopt;
    const auto parts = non_empty_list(text);
    if (parts.size() != 4) throw ConfigError("grid.bbox needs lat_min,lat_max,lon_min,lon_max");
    BoundingBox b;
    b.lat_min = parse_double("grid.bbox", parts[0]);
    b.lat_max = parse_double("grid.bbox", parts[1]);
    b.lon_min = parse_double("grid.bbox", parts[2]);
    b.lon_max = parse_double("grid.bbox", parts[3]);
    return b;
}

fs::path output_dir(const RunConfig& cfg) {
    fs::path dir = cfg.get("path.out");
    fs::create_directories(dir);
    return dir;
}

std::string required_path(const RunConfig& cfg, const std::string& key) {
    std::string v = cfg.get(key);
    if (v.empty()) throw ConfigError("missing required key '" + key + "'");
    return v;
}

std::string echo_text(const KeyValues& kv) {
    std::ostringstream out;
    for (const auto& [k, v] : kv.entries()) out << "# " << k << "=" << v << "\n";
    return out.str();
}

}  // namespace

// ----------------------------------------------------------------- RunConfig

RunConfig RunConfig::from_kv(const KeyValues& kv) {
    RunConfig cfg;
    for (const auto& [k, v] : kv.entries()) cfg.set(k, v);
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) { return from_kv(KeyValues::load(path)); }

void RunConfig::set(const std::string& key, const std::string& value) {
    require_known(key);
    values_.set(key, value);
}

std::string RunConfig::get(const std::string& key) const {
    if (const std::string* v = values_.find(key)) return *v;
    const KeySpec* spec = find_key(key);
    if (!spec) throw ConfigError("unknown configuration key '" + key + "'");
    return spec->fallback;
}

bool RunConfig::is_set(const std::string& key) const { return values_.has(key) && !values_.get(key).empty(); }

double RunConfig::get_double(const std::string& key) const { return parse_double(key, get(key)); }

std::size_t RunConfig::get_size(const std::string& key) const {
    const long long v = parse_int(key, get(key));
    if (v < 0) throw ConfigError("key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
}

bool RunConfig::get_bool(const std::string& key) const { return parse_bool(key, get(key)); }

KeyValues RunConfig::echo() const {
    KeyValues kv;
    for (const KeySpec& k : known_keys()) kv.set(k.key, get(k.key));
    return kv;
}

GridSpec RunConfig::grid() const {
    GridSpec g;
    g.h = get_size("grid.h");
    g.w = get_size("grid.w");
    g.m = get_size("grid.m");
    g.n = get_size("grid.n");
    g.interval_days = static_cast<int>(get_size("grid.interval_days"));
    g.categories = non_empty_list(get("grid.categories"));
    if (auto b = parse_bbox(get("grid.bbox"))) g.bbox = *b;
    return g;
}

ModelConfig RunConfig::model(const GridSpec& grid) const {
    ModelConfig base;
    base.m = grid.m;
    base.n = grid.n;
    base.c = grid.c();
    base.h = grid.h;
    base.w = grid.w;
    return model_config_from_kv(effective(*this), base);
}

TrainConfig RunConfig::train() const { return train_config_from_kv(effective(*this)); }

LossConfig RunConfig::loss() const { return loss_config_from_kv(effective(*this)); }

// ------------------------------------------------------------------ commands

int cmd_build_dataset(const RunConfig& cfg, std::ostream& out) {
    const std::string csv = required_path(cfg, "data.csv");
    const std::string target = required_path(cfg, "path.dataset");
    SchemaMap schema;
    schema.timestamp_column = cfg.get("data.timestamp_column");
    schema.latitude_column = cfg.get("data.latitude_column");
    schema.longitude_column = cfg.get("data.longitude_column");
    schema.category_column = cfg.get("data.category_column");
    schema.timestamp_format = cfg.get("data.timestamp_format");
    const IngestResult ingest = ingest_csv(csv, schema);
    if (ingest.records.empty()) throw DataError("no valid records in '" + csv + "'");

    GridSpec spec = cfg.grid();
    const auto interval = std::chrono::days(spec.interval_days);
    if (spec.interval_days <= 0) throw ConfigError("grid.interval_days must be positive");
    auto [first, last] = std::minmax_element(ingest.records.begin(), ingest.records.end(),
                                             [](const EventRecord& a, const EventRecord& b) {
                                                 return a.timestamp < b.timestamp;
                                             });
    const Days start = cfg.is_set("data.period_start") ? parse_date(cfg.get("data.period_start"))
                                                      : std::chrono::floor<std::chrono::days>(first->timestamp);
    Days end;
    if (cfg.is_set("data.period_end")) {
        end = parse_date(cfg.get("data.period_end"));
    } else {
        const Days last_day = std::chrono::floor<std::chrono::days>(last->timestamp);
        const auto span = (last_day - start).count() + 1;
        const auto frames = (span + spec.interval_days - 1) / spec.interval_days;
        end = start + interval * std::max<long>(frames, 1);
    }
    if (end <= start) throw ConfigError("data.period_end must be after data.period_start");
    const std::size_t total = static_cast<std::size_t>((end - start).count() / spec.interval_days);
    const auto ratios = parse_ratios(cfg.get("data.split"));
    const std::size_t train_frames = static_cast<std::size_t>(std::llround(static_cast<double>(total) * ratios[0]));
    const Days train_end = start + interval * static_cast<long>(train_frames);

    if (!cfg.is_set("grid.bbox")) spec.bbox = bounding_box(ingest.records, start, train_end);
    if (spec.categories.empty()) {
        const std::size_t want = cfg.get_size("grid.num_categories");
        spec.categories = top_categories(ingest.records, start, train_end, want);
        if (spec.categories.size() < want) {
            log_warning("training period has only " + std::to_string(spec.categories.size()) + " categories");
        }
    }
    spec.validate();

    FrameRun run;
    run.start = start;
    run.interval_days = spec.interval_days;
    run.frames = rasterize(ingest.records, spec, start, end);
    const auto parts = split_periods(run, ratios, spec.m + spec.n);

    Dataset ds;
    ds.spec = spec;
    ds.meta.set("source", fs::path(csv).filename().string());
    ds.meta.set("records", std::to_string(ingest.records.size()));
    ds.meta.set("skipped_rows", std::to_string(ingest.skipped));
    ds.meta.set("period_start", format_date(start));
    ds.meta.set("period_end", format_date(end));
    static constexpr const char* names[] = {"train", "val", "test"};
    for (std::size_t p = 0; p < 3; ++p) ds.splits.push_back({names[p], {parts[p]}});
    write_dataset(target, ds);

    out << "dataset " << target << "\n";
    out << "records " << ingest.records.size() << " (skipped " << ingest.skipped << ")\n";
    out << "period " << format_date(start) << " .. " << format_date(end) << " (" << total << " frames)\n";
    out << "categories";
    for (const std::string& c : spec.categories) out << ' ' << c;
    out << "\n";
    for (const DatasetSplit& s : ds.splits)
        out << s.name << ": frames=" << ds.frame_count(s.name) << " sequences=" << ds.sequences(s.name).size() << "\n";
    return 0;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
    const std::string target = required_path(cfg, "path.dataset");
    GridSpec spec = cfg.grid();
    if (spec.categories.empty()) {
        for (std::size_t k = 0; k < cfg.get_size("grid.num_categories"); ++k) spec.categories.push_back("c" + std::to_string(k));
    }
    spec.validate();
    const std::string generator = cfg.get("synth.generator");
    Rng rng(cfg.get_size("synth.seed"));
    auto generate = [&](std::size_t count) {
        if (generator == "diag" || generator == "moving-hotspot") {
            HotspotConfig hc;
            hc.mass = cfg.get_double("synth.mass");
            if (cfg.is_set("synth.max_offset")) hc.max_offset = cfg.get_size("synth.max_offset");
            return synth_moving_hotspot(spec, count, rng, hc);
        }
        if (generator == "correlated") {
            CorrelatedConfig cc;
            cc.hotspots = cfg.get_size("synth.hotspots");
            cc.rate = cfg.get_double("synth.rate");
            return synth_correlated(spec, count, rng, cc);
        }
        throw ConfigError("unknown generator '" + generator + "' (valid: diag, moving-hotspot, correlated)");
    };
    Dataset ds;
    ds.spec = spec;
    ds.meta.set("generator", generator);
    ds.meta.set("seed", cfg.get("synth.seed"));
    ds.splits.push_back(split_from_sequences("train", generate(cfg.get_size("synth.train_sequences"))));
    ds.splits.push_back(split_from_sequences("val", generate(cfg.get_size("synth.val_sequences"))));
    ds.splits.push_back(split_from_sequences("test", generate(cfg.get_size("synth.test_sequences"))));
    write_dataset(target, ds);
    out << "dataset " << target << " (" << generator << ")\n";
    for (const DatasetSplit& s : ds.splits) out << s.name << ": sequences=" << ds.sequences(s.name).size() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    const Dataset ds = read_dataset(required_path(cfg, "path.dataset"));
    const fs::path dir = output_dir(cfg);
    TrainOptions options;
    options.report_path = (dir / "train_report.txt").string();
    options.checkpoint_path = cfg.is_set("path.checkpoint") ? cfg.get("path.checkpoint") : (dir / "model.ckpt").string();
    options.resume_from = cfg.get("path.resume");
    options.config_echo = cfg.echo();
    const TrainState state = train_loop(ds, cfg.model(ds.spec), cfg.train(), cfg.loss(), options);
    out << "steps " << state.step << ", epochs " << state.epoch << "\n";
    if (!state.history.empty()) {
        const StepRecord& last = state.history.back();
        out << "final L=" << format_double(last.loss) << " L_r=" << format_double(last.reconstruction)
            << " L_c=" << format_double(last.contrastive) << " |S'|=" << format_double(last.semantics_norm) << "\n";
    }
    out << "checkpoint " << options.checkpoint_path << "\nreport " << options.report_path << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
    const Dataset ds = read_dataset(required_path(cfg, "path.dataset"));
    const std::string split = cfg.get("eval.split");
    const std::vector<OccurrenceSequence> data = ds.sequences(split);
    if (data.empty()) throw DataError("split '" + split + "' has no sequences");
    const PostProcess post = parse_postprocess(cfg.get("eval.postprocess"));
    const std::string baseline = cfg.get("eval.baseline");
    const std::string probe = cfg.get("eval.probe");
    static const std::vector<std::string> baselines{"none", "history", "lr", "all"};
    static const std::vector<std::string> probes{"none", "rotation", "semantics", "dynamics", "all"};
    if (std::find(baselines.begin(), baselines.end(), baseline) == baselines.end())
        throw ConfigError("unknown baseline '" + baseline + "' (valid: none, history, lr, all)");
    if (std::find(probes.begin(), probes.end(), probe) == probes.end())
        throw ConfigError("unknown probe '" + probe + "' (valid: none, rotation, semantics, dynamics, all)");

    const fs::path dir = output_dir(cfg);
    const std::size_t threads = resolve_threads(0);
    const KeyValues echo = cfg.echo();
    std::ostringstream summary;
    summary << echo_text(echo);
    summary << "# split=" << split << " sequences=" << data.size() << "\n";

    auto report = [&](const std::string& name, const EvalReport& r) {
        write_file_atomic((dir / ("metrics_" + name + ".csv")).string(), metrics_csv(r));
        summary << name << ".macro_rmse=" << format_double(r.macro_rmse) << "\n";
        summary << name << ".macro_mae=" << format_double(r.macro_mae) << "\n";
        out << name << ": macro RMSE " << format_double(r.macro_rmse) << ", macro MAE " << format_double(r.macro_mae)
            << "\n";
    };

    const bool need_model = cfg.is_set("path.checkpoint") || probe != "none" || baseline == "none";
    std::optional<ModelParams> model;
    if (need_model) {
        const std::string path = required_path(cfg, "path.checkpoint");
        if (!fs::exists(path)) throw ConfigError("checkpoint '" + path + "' does not exist");
        model = load_model(path);
        report("model", evaluate(model_predictor(*model), data, ds.spec.categories, post, threads));
    }
    if (baseline == "history" || baseline == "all") {
        report("history", evaluate(history_predictor(ds.spec.n), data, ds.spec.categories, post, threads));
    }
    if (baseline == "lr" || baseline == "all") {
        LinearBaselineConfig lc;
        lc.ridge = cfg.get_double("eval.ridge");
        const LinearBaseline lr = lr_baseline_fit(ds.sequences("train"), lc);
        report("lr", evaluate(lr_predictor(lr), data, ds.spec.categories, post, threads));
    }
    if (model && (probe == "rotation" || probe == "all")) {
        const int turns = static_cast<int>(cfg.get_size("eval.turns"));
        EvalReport r = rotation_probe(model_predictor(*model), data, ds.spec.categories, turns, post, threads);
        report("rotation", r);
        fs::create_directories(dir / "rotation");
        write_grids((dir / "rotation").string(), r.artifacts);
    }
    if (model && (probe == "semantics" || probe == "all")) {
        const std::size_t k = cfg.get_size("eval.category");
        if (k >= ds.spec.c()) throw ConfigError("eval.category out of range");
        const SemanticsProbe sp = semantics_probe(model_predictor(*model), data.front(), k, post);
        fs::create_directories(dir / "semantics");
        write_grids((dir / "semantics").string(), sp.frames);
        summary << "semantics.total_mass=" << format_double(sp.total_mass) << "\n";
        summary << "semantics.leaked_mass=" << format_double(sp.leaked_mass) << "\n";
        out << "semantics: leaked " << format_double(sp.leaked_mass) << " of " << format_double(sp.total_mass) << "\n";
    }
    if (model && (probe == "dynamics" || probe == "all")) {
        const DynamicsProbe dp = dynamics_probe(model_predictor(*model), ds.spec, cfg.get_size("eval.offset"),
                                                cfg.get_double("eval.mass"), post);
        fs::create_directories(dir / "dynamics");
        write_grids((dir / "dynamics").string(), dp.frames);
        summary << "dynamics.distances=";
        for (std::size_t i = 0; i < dp.distances.size(); ++i) summary << (i ? "," : "") << dp.distances[i];
        summary << "\n";
        out << "dynamics: first-step distance " << dp.distances.front() << "\n";
    }
    write_file_atomic((dir / "summary.txt").string(), summary.str());
    return 0;
}

// ----------------------------------------------------------------------- run

int run(int argc, char** argv) {
    CLI::App app{"Multi-axis attention forecaster for sparse spatiotemporal event counts"};
    app.require_subcommand(1);

    struct Options {
        std::string config;
        std::vector<std::string> sets;
        std::optional<std::uint64_t> seed;
        std::optional<std::string> out, contrast, baseline, probe, dataset, checkpoint;
        std::optional<int> turns;
    } opt;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", opt.config, "key=value configuration file");
        sub->add_option("--set", opt.sets, "override, key=value (repeatable)");
        sub->add_option("--seed", opt.seed, "seed for training and synthesis");
        sub->add_option("--out", opt.out, "output directory");
        sub->add_option("--dataset", opt.dataset, "dataset file");
        sub->add_option("--checkpoint", opt.checkpoint, "checkpoint file");
    };
    CLI::App* build = app.add_subcommand("build-dataset", "rasterize an event CSV into a dataset file");
    CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset");
    CLI::App* train = app.add_subcommand("train", "train a model");
    CLI::App* eval = app.add_subcommand("eval", "compute metrics, baselines and probes");
    bool list_keys = false;
    app.add_flag("--list-keys", list_keys, "print the configuration keys and exit");
    for (CLI::App* sub : {build, synth, train, eval}) add_common(sub);
    train->add_option("--contrast", opt.contrast, "frobenius, dot or none");
    eval->add_option("--baseline", opt.baseline, "history, lr or all");
    eval->add_option("--probe", opt.probe, "rotation, semantics, dynamics or all");
    eval->add_option("--turns", opt.turns, "quarter turns for the rotation probe");
    app.require_subcommand(0, 1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    if (list_keys) {
        for (const KeySpec& k : known_keys())
            std::cout << k.key << "=" << k.fallback << (k.help[0] ? "  # " : "") << k.help << "\n";
        return 0;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return 2;
    }

    try {
        RunConfig cfg = opt.config.empty() ? RunConfig{} : RunConfig::load(opt.config);
        for (const std::string& s : opt.sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
            cfg.set(s.substr(0, eq), s.substr(eq + 1));
        }
        if (opt.seed) {
            cfg.set("train.seed", std::to_string(*opt.seed));
            cfg.set("synth.seed", std::to_string(*opt.seed));
        }
        if (opt.out) cfg.set("path.out", *opt.out);
        if (opt.dataset) cfg.set("path.dataset", *opt.dataset);
        if (opt.checkpoint) cfg.set("path.checkpoint", *opt.checkpoint);
        if (opt.contrast) cfg.set("loss.contrast", *opt.contrast);
        if (opt.baseline) cfg.set("eval.baseline", *opt.baseline);
        if (opt.probe) cfg.set("eval.probe", *opt.probe);
        if (opt.turns) cfg.set("eval.turns", std::to_string(*opt.turns));

        if (build->parsed()) return cmd_build_dataset(cfg, std::cout);
        if (synth->parsed()) return cmd_synth(cfg, std::cout);
        if (train->parsed()) return cmd_train(cfg, std::cout);
        return cmd_eval(cfg, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace mapsed::cli
