#include "rmsnet/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>

#include "rmsnet/checkpoint.hpp"
#include "rmsnet/data.hpp"
#include "rmsnet/eval.hpp"
#include "rmsnet/gradcheck_suite.hpp"
#include "rmsnet/infer.hpp"
#include "rmsnet/rng.hpp"
#include "rmsnet/synth.hpp"
#include "rmsnet/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace rmsnet {

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Config: return 1;
    case ErrorKind::Numeric: return 3;
    default: return 2;
    }
}

namespace {

struct SynthArgs {
    fs::path out = "data";
    Index train = 30, val = 10, test = 10;
    SynthSpec spec;
    bool spurious_pre_cue = false;
    bool force = false;
};

struct ModelArgs {
    RmsNetConfig model;
    bool no_activations = false;
    bool no_fc2_activation = false;
};

struct TrainArgs {
    fs::path data = "data";
    fs::path out = "run";
    TrainOptions options;
    bool no_mask = false;
    bool keep_halftime_subs = false;
    std::string delta_grid = "5:60:5";
    std::string matching = "one-to-one";
    std::string mask_side = "before";
};

struct EvalArgs {
    fs::path checkpoint;
    fs::path predictions;
    fs::path split = "data/test";
    fs::path out;
    std::string delta_grid = "5:60:5";
    std::string matching = "one-to-one";
    InferOptions infer;
    Index num_classes = 3;
};

struct InferArgs {
    fs::path checkpoint;
    fs::path split = "data/test";
    fs::path out = "predictions.json";
    fs::path vote_density;
    InferOptions infer;
};

struct ImportArgs {
    fs::path raw;
    fs::path out;
};

struct GradcheckArgs {
    GradCheckSuiteOptions suite;
    std::string precision = "both";
};

void add_model_options(CLI::App* app, ModelArgs& a) {
    RmsNetConfig& m = a.model;
    app->add_option("--feature-dim", m.feature_dim, "input feature size")->capture_default_str();
    app->add_option("--clip-len", m.clip_len, "frames per clip")->capture_default_str();
    app->add_option("--fc1", m.fc1_dim)->capture_default_str();
    app->add_option("--conv1", m.conv1_dim)->capture_default_str();
    app->add_option("--conv2", m.conv2_dim)->capture_default_str();
    app->add_option("--fc2", m.fc2_dim)->capture_default_str();
    app->add_option("--num-classes", m.num_classes)->capture_default_str();
    app->add_option("--kernel", m.kernel_size, "temporal kernel size")->capture_default_str();
    app->add_option("--dropout", m.dropout)->capture_default_str();
    app->add_option("--lambda", m.lambda, "regression loss weight")->capture_default_str();
    app->add_flag("--no-activations", a.no_activations, "drop every ReLU");
    app->add_flag("--no-fc2-activation", a.no_fc2_activation, "drop the ReLU after FC2");
}

// Prints the active subcommand's settings in the --config file format.
void print_config(const CLI::App& app, std::uint64_t seed, std::ostream& out) {
    const CLI::Option* threads = app.get_option("--threads");
    out << "# resolved configuration\nthreads="
        << (threads->count() ? threads->results().front() : threads->get_default_str()) << "\n";
    for (const CLI::App* sub : app.get_subcommands())
        out << "[" << sub->get_name() << "]\n" << sub->config_to_str(true, false);
    out << "# seed = " << seed << "\n" << std::flush;
}

void write_json(const json& doc, const fs::path& path) {
    std::ofstream f(path);
    RMSNET_REQUIRE(f.good(), Io, "cannot write ", path.string());
    f << std::setw(2) << doc << '\n';
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    RMSNET_REQUIRE(!ec, Io, "cannot create ", dir.string(), ": ", ec.message());
}

std::vector<MatchRecord> load_split_checked(const fs::path& dir, const RmsNetConfig& config) {
    RMSNET_REQUIRE(fs::is_directory(dir), Io, "split directory ", dir.string(), " not found");
    auto matches = load_split(dir, config.num_classes);
    RMSNET_REQUIRE(!matches.empty(), EmptyInput, "no matches in ", dir.string());
    for (const auto& m : matches) {
        RMSNET_REQUIRE(m.features.cols() == config.feature_dim, Format, dir.string(), "/", m.id,
                       ": features have ", m.features.cols(), " columns, model expects ",
                       config.feature_dim);
    }
    return matches;
}

int cmd_synth(const CLI::App& app, SynthArgs& a, std::ostream& out) {
    print_config(app, a.spec.signature_seed, out);
    a.spec.validate();
    if (fs::exists(a.out) && !fs::is_empty(a.out) && !a.force)
        detail::raise(ErrorKind::Usage, "output directory ", a.out.string(),
                      " is not empty (use --force to overwrite)");
    json manifest;
    manifest["seed"] = a.spec.signature_seed;
    manifest["featureRate"] = a.spec.feature_rate;
    manifest["featureDim"] = a.spec.feature_dim;
    manifest["numClasses"] = a.spec.num_classes;
    manifest["durationSeconds"] = a.spec.duration_s;
    manifest["signatureStrength"] = a.spec.signature_strength;
    manifest["preCueStrength"] = a.spec.pre_cue_strength;
    manifest["spuriousPreCue"] = a.spurious_pre_cue;
    const std::pair<const char*, Index> splits[] = {{"train", a.train}, {"val", a.val}, {"test", a.test}};
    for (const auto& [name, count] : splits) {
        SynthSpec spec = a.spec;
        spec.num_matches = count;
        spec.id_prefix = name;
        if (a.spurious_pre_cue && std::string_view(name) == "test") spec.pre_cue_strength = 0.0;
        const fs::path dir = a.out / name;
        if (fs::exists(dir)) fs::remove_all(dir);
        ensure_dir(dir);
        Rng rng = substream(a.spec.signature_seed, std::string("synth-") + name);
        const auto matches = synth_generate(spec, rng);
        json ids = json::array();
        Index events = 0;
        for (const auto& m : matches) {
            save_match(m, dir / (m.id + ".rmsf"), dir / (m.id + ".json"));
            ids.push_back(m.id);
            events += static_cast<Index>(m.events.size());
        }
        manifest["splits"][name] = {{"matches", ids}, {"events", events}};
        out << name << ": " << matches.size() << " matches, " << events << " events\n";
    }
    write_json(manifest, a.out / "manifest.json");
    return 0;
}

int cmd_import(ImportArgs& a, std::ostream& out) {
    const MatrixF features = import_raw_features(a.raw);
    save_features(features, a.out);
    out << "imported " << features.rows() << " x " << features.cols() << " features to "
        << a.out.string() << "\n";
    return 0;
}

json metrics_json(const EpochMetrics& m) {
    json j = {{"epoch", m.epoch},       {"loss", m.loss},     {"cls", m.cls},
              {"regr", m.regr},         {"accuracy", m.accuracy},
              {"offsetMae", m.offset_mae}, {"lr", m.lr},      {"samples", m.samples}};
    if (m.val_average_map) j["valAverageMap"] = *m.val_average_map;
    return j;
}

int cmd_train(const CLI::App& app, TrainArgs& a, ModelArgs& model, std::ostream& out) {
    print_config(app, a.options.seed, out);
    TrainOptions& o = a.options;
    o.model = model.model;
    if (model.no_activations) o.model.activations = false;
    if (model.no_fc2_activation) o.model.fc2_activation = false;
    o.masking = !a.no_mask;
    o.mask.side = mask_side_from_string(a.mask_side);
    o.drop_halftime_substitutions = !a.keep_halftime_subs;
    o.eval.deltas = parse_delta_grid(a.delta_grid);
    o.eval.matching = matching_policy_from_string(a.matching);
    o.eval.num_classes = o.model.num_classes;
    if (o.fixed_center) o.model.lambda = 0.0;
    o.model.validate();
    o.plan.validate();
    o.mask.validate();

    const auto train = load_split_checked(a.data / "train", o.model);
    const auto val = load_split_checked(a.data / "val", o.model);
    out << "train: " << train.size() << " matches, val: " << val.size() << " matches\n";

    ensure_dir(a.out);
    std::ofstream log(a.out / "metrics.jsonl");
    RMSNET_REQUIRE(log.good(), Io, "cannot write ", (a.out / "metrics.jsonl").string());
    const auto result = fit(train, val, o, [&](const EpochMetrics& m) {
        log << metrics_json(m).dump() << '\n' << std::flush;
        out << "epoch " << m.epoch << "  loss " << m.loss << "  acc " << m.accuracy << "  mae "
            << m.offset_mae << "  lr " << m.lr;
        if (m.val_average_map) out << "  val Average-mAP " << *m.val_average_map;
        out << std::endl;
    });
    save_checkpoint(o.model, result.best, a.out / "best.rmsn");
    out << "best epoch " << result.best_epoch << (result.stopped_early ? " (stopped early)" : "")
        << ", checkpoint " << (a.out / "best.rmsn").string() << "\n";
    return 0;
}

int cmd_eval(const CLI::App& app, EvalArgs& a, std::ostream& out) {
    print_config(app, 0, out);
    RMSNET_REQUIRE(a.checkpoint.empty() != a.predictions.empty(), Usage,
                   "eval needs exactly one of --checkpoint or --predictions");
    EvalOptions eo;
    eo.deltas = parse_delta_grid(a.delta_grid);
    eo.matching = matching_policy_from_string(a.matching);

    std::vector<SpotPrediction> predictions;
    std::vector<MatchRecord> matches;
    if (!a.checkpoint.empty()) {
        RMSNET_REQUIRE(fs::exists(a.checkpoint), Io, "checkpoint ", a.checkpoint.string(),
                       " not found");
        const Checkpoint ck = load_checkpoint(a.checkpoint);
        matches = load_split_checked(a.split, ck.config);
        predictions = spot_matches(ck.params, ck.config, matches, a.infer);
        eo.num_classes = ck.config.num_classes;
    } else {
        RMSNET_REQUIRE(fs::is_directory(a.split), Io, "split directory ", a.split.string(),
                       " not found");
        matches = load_split(a.split, a.num_classes);
        predictions = load_predictions(a.predictions);
        eo.num_classes = a.num_classes;
    }
    const auto truth = ground_truth(matches);
    const EvalReport report = average_map(predictions, truth, eo);
    for (std::size_t k = 0; k < report.deltas.size(); ++k)
        out << "delta " << report.deltas[k] << " s  mAP " << report.map[k] << "\n";
    out << std::setprecision(17) << "average_map " << report.average_map << "\n"
        << std::setprecision(6);
    if (!a.out.empty()) {
        ensure_dir(a.out);
        export_curves(report, a.out);
    }
    return 0;
}

int cmd_infer(const CLI::App& app, InferArgs& a, std::ostream& out) {
    print_config(app, 0, out);
    RMSNET_REQUIRE(fs::exists(a.checkpoint), Io, "checkpoint ", a.checkpoint.string(),
                   " not found");
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const auto matches = load_split_checked(a.split, ck.config);
    const auto predictions = spot_matches(ck.params, ck.config, matches, a.infer);
    save_predictions(predictions, a.out);
    out << predictions.size() << " predictions written to " << a.out.string() << "\n";
    if (!a.vote_density.empty()) {
        ensure_dir(a.vote_density);
        for (const auto& m : matches) {
            const VoteDensity v = vote_density(ck.params, ck.config, m, a.infer);
            std::ofstream f(a.vote_density / (m.id + "_votes.csv"));
            RMSNET_REQUIRE(f.good(), Io, "cannot write vote density for ", m.id);
            f << "frame,seconds,votes\n";
            for (std::size_t i = 0; i < v.counts.size(); ++i)
                f << i << ',' << m.seconds(static_cast<Index>(i)) << ',' << v.counts[i] << '\n';
        }
    }
    return 0;
}

int cmd_gradcheck(const CLI::App& app, GradcheckArgs& a, ModelArgs& model, std::ostream& out) {
    print_config(app, a.suite.seed, out);
    a.suite.model = model.model;
    if (model.no_activations) a.suite.model.activations = false;
    if (model.no_fc2_activation) a.suite.model.fc2_activation = false;
    RMSNET_REQUIRE(a.precision == "both" || a.precision == "64" || a.precision == "32", Usage,
                   "--precision must be 64, 32 or both");
    std::vector<GradCheckReport> reports = check_kernels(a.suite);
    if (a.precision != "32") reports.push_back(check_model(a.suite, Precision::Double));
    if (a.precision != "64") reports.push_back(check_model(a.suite, Precision::Single));
    bool ok = true;
    for (const auto& r : reports) {
        out << r.label << " (tolerance " << r.tolerance << ")\n";
        for (const auto& e : r.entries)
            out << "  " << std::left << std::setw(16) << e.name << std::right << " max rel err "
                << std::scientific << std::setprecision(3) << e.max_rel_error << std::defaultfloat
                << " over " << e.probes << " probes"
                << (e.skipped ? " (" + std::to_string(e.skipped) + " skipped at kinks)" : "") << "  " << (e.passed ? "ok" : "FAIL") << "\n";
        ok = ok && r.passed();
    }
    out << (ok ? "gradcheck passed" : "gradcheck FAILED") << std::endl;
    return ok ? 0 : 3;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"RMS-Net event spotting on pre-extracted features"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI file; command-line flags take precedence");
    app.allow_config_extras(CLI::config_extras_mode::error);
    int threads = 1;
    app.add_option("--threads", threads, "math threads (1 keeps runs bit-reproducible)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "write a synthetic train/val/test corpus");
    s->add_option("--out", synth.out, "output directory")->capture_default_str();
    s->add_option("--train-matches", synth.train)->capture_default_str();
    s->add_option("--val-matches", synth.val)->capture_default_str();
    s->add_option("--test-matches", synth.test)->capture_default_str();
    s->add_option("--duration", synth.spec.duration_s, "match length, seconds")->capture_default_str();
    s->add_option("--feature-rate", synth.spec.feature_rate, "frames per second")->capture_default_str();
    s->add_option("--feature-dim", synth.spec.feature_dim)->capture_default_str();
    s->add_option("--num-classes", synth.spec.num_classes)->capture_default_str();
    s->add_option("--mean-gap", synth.spec.mean_event_gap_s, "seconds")->capture_default_str();
    s->add_option("--min-gap", synth.spec.min_event_gap_s, "seconds")->capture_default_str();
    s->add_option("--noise", synth.spec.noise_std)->capture_default_str();
    s->add_option("--signature-strength", synth.spec.signature_strength)->capture_default_str();
    s->add_option("--signature-horizon", synth.spec.signature_horizon, "frames")->capture_default_str();
    s->add_option("--pre-cue-strength", synth.spec.pre_cue_strength)->capture_default_str();
    s->add_option("--pre-cue-horizon", synth.spec.pre_cue_horizon, "frames")->capture_default_str();
    s->add_flag("--spurious-pre-cue", synth.spurious_pre_cue,
                "pre-event cues in train/val only, absent from test");
    s->add_option("--seed", synth.spec.signature_seed)->capture_default_str();
    s->add_flag("--force", synth.force, "overwrite a non-empty output directory");

    ImportArgs import;
    auto* im = app.add_subcommand("import", "convert a raw float32 dump to the feature format");
    im->add_option("--raw", import.raw, "u32 rows, u32 cols, float32 values")->required();
    im->add_option("--out", import.out, "destination .rmsf file")->required();

    ModelArgs model;
    TrainArgs train;
    auto* t = app.add_subcommand("train", "train on <data>/train, validate on <data>/val");
    t->add_option("--data", train.data, "corpus directory")->capture_default_str();
    t->add_option("--out", train.out, "run directory")->capture_default_str();
    add_model_options(t, model);
    TrainPlan& plan = train.options.plan;
    t->add_option("--epochs", plan.max_epochs)->capture_default_str();
    t->add_option("--batch", plan.batch_size)->capture_default_str();
    t->add_option("--lr", plan.base_lr)->capture_default_str();
    t->add_option("--momentum", plan.momentum)->capture_default_str();
    t->add_option("--weight-decay", plan.weight_decay)->capture_default_str();
    t->add_option("--patience", plan.patience)->capture_default_str();
    t->add_option("--fg-per-epoch", plan.fg_per_epoch)->capture_default_str();
    t->add_option("--mask-p", train.options.mask.p, "masking probability")->capture_default_str();
    t->add_option("--mask-q", train.options.mask.q, "max masked fraction distance")->capture_default_str();
    t->add_option("--mask-side", train.mask_side, "before | after")->capture_default_str();
    t->add_flag("--no-mask", train.no_mask, "disable masking");
    t->add_flag("--center-clips", train.options.center_clips_only,
                "train only on clips centred on their event");
    t->add_flag("--keep-halftime-subs", train.keep_halftime_subs,
                "keep substitutions around half-time");
    t->add_option("--halftime-window", train.options.halftime_window_s, "seconds")->capture_default_str();
    t->add_flag("--fixed-center", train.options.fixed_center,
                "no offset supervision; validate with offset 0.5");
    t->add_option("--delta-grid", train.delta_grid, "start:stop:step seconds")->capture_default_str();
    t->add_option("--matching", train.matching, "one-to-one | many-to-one")->capture_default_str();
    t->add_option("--seed", train.options.seed)->capture_default_str();

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "spot a split and report Average-mAP");
    e->add_option("--checkpoint", eval.checkpoint);
    e->add_option("--predictions", eval.predictions, "score a predictions file instead");
    e->add_option("--split", eval.split, "split directory")->capture_default_str();
    e->add_option("--out", eval.out, "directory for curve files");
    e->add_option("--num-classes", eval.num_classes, "with --predictions")->capture_default_str();
    e->add_option("--delta-grid", eval.delta_grid, "start:stop:step seconds")->capture_default_str();
    e->add_option("--matching", eval.matching, "one-to-one | many-to-one")->capture_default_str();
    e->add_option("--stride", eval.infer.stride, "0 = clip length")->capture_default_str();
    e->add_flag("--fixed-center", eval.infer.fixed_center, "assume offset 0.5");

    InferArgs infer;
    auto* in = app.add_subcommand("infer", "write spotting predictions for a split");
    in->add_option("--checkpoint", infer.checkpoint)->required();
    in->add_option("--split", infer.split)->capture_default_str();
    in->add_option("--out", infer.out, "predictions JSON")->capture_default_str();
    in->add_option("--stride", infer.infer.stride, "0 = clip length")->capture_default_str();
    in->add_flag("--fixed-center", infer.infer.fixed_center, "assume offset 0.5");
    in->add_option("--vote-density", infer.vote_density, "directory for stride-1 vote CSVs");

    ModelArgs gmodel;
    GradcheckArgs gc;
    auto* g = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
    add_model_options(g, gmodel);
    g->add_option("--precision", gc.precision, "64 | 32 | both")->capture_default_str();
    g->add_option("--epsilon", gc.suite.model_epsilon)->capture_default_str();
    g->add_option("--seed", gc.suite.seed)->capture_default_str();
    g->add_flag("--inject-fault", gc.suite.inject_fault, "test hook: corrupt one gradient")
        ->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        return app.exit(ex, out, err) == 0 ? 0 : 1;
    }

    Eigen::setNbThreads(threads);
    try {
        if (*s) return cmd_synth(app, synth, out);
        if (*im) return cmd_import(import, out);
        if (*t) return cmd_train(app, train, model, out);
        if (*e) return cmd_eval(app, eval, out);
        if (*in) return cmd_infer(app, infer, out);
        if (*g) return cmd_gradcheck(app, gc, gmodel, out);
    } catch (const Error& ex) {
        err << "error (" << to_string(ex.kind()) << "): " << ex.what() << std::endl;
        return exit_code_for(ex.kind());
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << std::endl;
        return 2;
    }
    return 1;
}

} // namespace rmsnet
