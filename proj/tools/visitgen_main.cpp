// visitgen command-line tool: synthetic data generation, preprocessing,
// training, evaluation, controlled generation, and the ablation run.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "visitgen/visitgen.hpp"

namespace fs = std::filesystem;
using namespace visitgen;
using nlohmann::json;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool deterministic = false;
    int threads = 1;

    config::RunConfig run_config() const {
        return config_path.empty() ? config::RunConfig{} : config::RunConfig::load(config_path);
    }
    int effective_threads() const { return deterministic ? 1 : std::max(1, threads); }
    void ensure_out_dir() const { fs::create_directories(out_dir); }
    std::string out(const std::string& name) const {
        return (fs::path(out_dir) / name).string();
    }
};

void add_global_opts(CLI::App* cmd, GlobalOpts& g) {
    cmd->add_option("--config", g.config_path, "JSON config file");
    cmd->add_option("--seed", g.seed, "random seed");
    cmd->add_flag("--deterministic", g.deterministic, "force single-threaded deterministic mode");
    cmd->add_option("--out-dir", g.out_dir, "output directory");
    cmd->add_option("--threads", g.threads, "worker threads (deterministic merge)");
}

// Windows and agent splits for training/ablation.
struct PreparedData {
    prep::SplitResult splits;
    RegionVocabulary vocab;
    TimeScaling scaling;
};

PreparedData prepare_training_data(const std::string& data_path, const std::string& vocab_path,
                                   train::Task task, prep::SplitSpec spec, std::uint64_t seed) {
    PreparedData out;
    Timestamp epoch_offset = 0;
    out.vocab = io::read_vocabulary_file(vocab_path, &epoch_offset);
    out.scaling.epoch_offset = epoch_offset;
    std::vector<VisitSequence> seqs = io::read_sequences_file(data_path);
    spec.mode = task == train::Task::NextVisit ? prep::SplitSpec::Mode::Chronological
                                               : prep::SplitSpec::Mode::ByAgent;
    out.splits = prep::split(seqs, spec, seed);
    return out;
}

double dataset_diameter(const std::vector<VisitSequence>& seqs) {
    double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
    bool first = true;
    for (const auto& s : seqs)
        for (const auto& v : s.visits) {
            if (first) {
                min_x = max_x = v.location.x;
                min_y = max_y = v.location.y;
                first = false;
            } else {
                min_x = std::min(min_x, v.location.x);
                max_x = std::max(max_x, v.location.x);
                min_y = std::min(min_y, v.location.y);
                max_y = std::max(max_y, v.location.y);
            }
        }
    return std::max(2.0, std::max(max_x - min_x, max_y - min_y));
}

struct TrainArtifacts {
    model::Checkpoint meta;
    std::unique_ptr<model::VisitModel> net;
    train::TrainResult result;
};

TrainArtifacts run_training(const PreparedData& data, const model::ModelConfig& mc,
                            model::Variant variant, train::Task task,
                            const train::TrainOptions& opt, bool verbose) {
    TrainArtifacts art;
    art.net = std::make_unique<model::VisitModel>(mc, variant, data.vocab.size(), opt.seed);
    art.net->resolve_s2v_max(dataset_diameter(data.splits.train));
    train::TrainOptions o = opt;
    if (verbose) o.progress = &std::cerr;
    art.result = train::fit(*art.net, data.splits.train, data.splits.valid, task, data.vocab,
                            data.scaling, o);
    art.meta.config = art.net->config();
    art.meta.variant = variant;
    art.meta.vocab_size = data.vocab.size();
    art.meta.scaling = data.scaling;
    return art;
}

std::vector<model::ModelInstance> eval_instances(const std::vector<VisitSequence>& seqs,
                                                 train::Task task, const RegionVocabulary& vocab,
                                                 const TimeScaling& scaling, double mask_prob,
                                                 std::uint64_t seed) {
    return train::build_instances(seqs, task, vocab, scaling, mask_prob,
                                  Rng(mix_seed(seed, 0xE7A1)).fork(0xFEED));
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const GlobalOpts& g, synth::SynthConfig cfg) {
    cfg.seed = g.seed;
    cfg.validate();
    const synth::SynthResult res = synth::generate(cfg);
    g.ensure_out_dir();
    io::write_sequences_file(g.out("visits.jsonl"), res.sequences);
    io::write_vocabulary_file(g.out("vocab.json"), res.vocab, 0);
    config::write_manifest(g.out_dir, "synth", config::synth_to_json(cfg), g.seed,
                           {"visits.jsonl", "vocab.json"});
    std::cerr << "synth: " << res.sequences.size() << " agents, vocab " << res.vocab.size()
              << " ids -> " << g.out_dir << "\n";
    return 0;
}

struct PreprocessOpts {
    std::string input;
    std::string format = "auto";
    double cell_size = 1200.0;
    double radius = 200.0;
    std::int64_t min_duration = 600;
    double ref_lat = std::numeric_limits<double>::quiet_NaN();
    double ref_lon = std::numeric_limits<double>::quiet_NaN();
    std::string task = "infill";
};

int cmd_preprocess(const GlobalOpts& g, const PreprocessOpts& po, prep::SplitSpec spec) {
    // Gather per-agent raw points.
    std::vector<std::pair<std::string, std::vector<prep::RawPoint>>> raw;
    std::string format = po.format;
    if (format == "auto") format = fs::is_directory(po.input) ? "plt" : "csv";
    if (format == "plt") {
        raw = prep::load_geolife_directory(po.input);
    } else if (format == "csv") {
        std::ifstream is(po.input, std::ios::binary);
        if (!is) throw IoError("cannot open for reading: " + po.input);
        std::map<std::string, std::vector<prep::RawPoint>> by_agent;
        for (auto& [agent, pt] : prep::parse_csv(is)) by_agent[agent].push_back(pt);
        for (auto& [agent, pts] : by_agent) {
            std::stable_sort(pts.begin(), pts.end(),
                             [](const prep::RawPoint& a, const prep::RawPoint& b) {
                                 return a.t < b.t;
                             });
            raw.emplace_back(agent, std::move(pts));
        }
    } else {
        throw ConfigError("preprocess: format must be plt or csv");
    }
    if (raw.empty()) throw ConfigError("preprocess: no input points found");

    const double ref_lat = std::isnan(po.ref_lat) ? raw.front().second.front().lat : po.ref_lat;
    const double ref_lon = std::isnan(po.ref_lon) ? raw.front().second.front().lon : po.ref_lon;

    std::vector<VisitSequence> seqs;
    std::size_t repaired = 0;
    for (auto& [agent, pts] : raw) {
        const auto planar = prep::project(pts, ref_lat, ref_lon);
        VisitSequence seq;
        seq.agent = agent;
        seq.visits = prep::detect_stay_points(planar, po.radius, po.min_duration);
        repaired += prep::repair_overlaps(seq).overlaps_repaired;
        if (!seq.visits.empty()) seqs.push_back(std::move(seq));
    }
    if (seqs.empty()) throw ConfigError("preprocess: no stay points detected");
    const TimeScaling scaling = prep::normalize_times(seqs);

    const train::Task task = train::task_from_name(po.task);
    spec.mode = task == train::Task::NextVisit ? prep::SplitSpec::Mode::Chronological
                                               : prep::SplitSpec::Mode::ByAgent;
    prep::SplitResult splits = prep::split(seqs, spec, g.seed);

    RegionVocabulary vocab = RegionVocabulary::build(splits.train, po.cell_size);
    prep::assign_regions(vocab, seqs);
    prep::assign_regions(vocab, splits.train);
    prep::assign_regions(vocab, splits.valid);
    prep::assign_regions(vocab, splits.test);

    g.ensure_out_dir();
    io::write_sequences_file(g.out("visits.jsonl"), seqs);
    io::write_sequences_file(g.out("train.jsonl"), splits.train);
    io::write_sequences_file(g.out("valid.jsonl"), splits.valid);
    io::write_sequences_file(g.out("test.jsonl"), splits.test);
    io::write_vocabulary_file(g.out("vocab.json"), vocab, scaling.epoch_offset);
    json cfg{{"input", po.input},        {"format", format},
             {"cell_size", po.cell_size}, {"radius", po.radius},
             {"min_duration", po.min_duration}, {"ref_lat", ref_lat},
             {"ref_lon", ref_lon},       {"task", po.task},
             {"window", spec.window},    {"mask_prob", spec.mask_prob},
             {"repaired_overlaps", repaired}};
    config::write_manifest(g.out_dir, "preprocess", cfg, g.seed,
                           {"visits.jsonl", "train.jsonl", "valid.jsonl", "test.jsonl",
                            "vocab.json"});
    std::cerr << "preprocess: " << seqs.size() << " agents, " << vocab.num_cells()
              << " regions, repaired " << repaired << " overlaps -> " << g.out_dir << "\n";
    return 0;
}

struct TrainOpts {
    std::string data;
    std::string vocab;
    std::string task = "next";
    std::string variant = "full";
    std::string preset;
    int max_epochs = 0;   // 0: use config/default
    int window = 0;       // 0: use config/spec default
    double mask_prob = -1.0;
    bool verbose = false;
};

int cmd_train(const GlobalOpts& g, const TrainOpts& to) {
    const config::RunConfig rc = g.run_config();
    model::ModelConfig mc = model::ModelConfig::desk();
    config::apply_model(rc.section("model"), mc);
    if (!to.preset.empty()) config::apply_model(json{{"preset", to.preset}}, mc);
    prep::SplitSpec spec;
    config::apply_split(rc.section("split"), spec);
    if (to.window > 0) spec.window = to.window;
    if (to.mask_prob >= 0.0) spec.mask_prob = to.mask_prob;

    train::TrainOptions opt;
    opt.learning_rate = mc.learning_rate;
    opt.batch_size = mc.batch_size;
    opt.max_epochs = 30;
    config::apply_train(rc.section("train"), opt);
    if (to.max_epochs > 0) opt.max_epochs = to.max_epochs;
    opt.seed = g.seed;
    opt.mask_prob = spec.mask_prob;

    const train::Task task = train::task_from_name(to.task);
    const PreparedData data = prepare_training_data(to.data, to.vocab, task, spec, g.seed);
    const model::Variant variant = model::variant_from_name(to.variant);

    TrainArtifacts art = run_training(data, mc, variant, task, opt, to.verbose);

    g.ensure_out_dir();
    model::save_checkpoint(g.out("model.ckpt"), art.meta, art.net->store());
    io::write_text_file(g.out("train_log.csv"), art.result.log_csv());
    io::write_sequences_file(g.out("train.jsonl"), data.splits.train);
    io::write_sequences_file(g.out("valid.jsonl"), data.splits.valid);
    io::write_sequences_file(g.out("test.jsonl"), data.splits.test);
    json cfg;
    model::to_json(cfg, art.net->config());
    cfg["task"] = to.task;
    cfg["variant"] = to.variant;
    cfg["max_epochs"] = opt.max_epochs;
    cfg["patience"] = opt.patience;
    cfg["window"] = spec.window;
    cfg["mask_prob"] = spec.mask_prob;
    config::write_manifest(g.out_dir, "train", cfg, g.seed,
                           {"model.ckpt", "train_log.csv", "train.jsonl", "valid.jsonl",
                            "test.jsonl"});
    std::cerr << "train: " << art.result.epochs_run << " epochs, best epoch "
              << art.result.best_epoch << " (val loss " << art.result.best_val_loss << ") -> "
              << g.out_dir << "\n";
    return 0;
}

struct EvalOpts {
    std::string checkpoint;
    std::string data;
    std::string vocab;
    std::string task = "next";
    double mask_prob = 0.2;
};

int cmd_eval(const GlobalOpts& g, const EvalOpts& eo) {
    model::LoadedModel lm = model::load_checkpoint(eo.checkpoint);
    const RegionVocabulary vocab = io::read_vocabulary_file(eo.vocab);
    if (vocab.size() != lm.meta.vocab_size)
        throw ConfigError("eval: vocabulary size does not match checkpoint");
    const std::vector<VisitSequence> seqs = io::read_sequences_file(eo.data);
    const train::Task task = train::task_from_name(eo.task);
    const auto instances =
        eval_instances(seqs, task, vocab, lm.meta.scaling, eo.mask_prob, g.seed);
    const train::MetricsReport rep =
        train::evaluate(*lm.model, instances, lm.meta.scaling, g.effective_threads());

    g.ensure_out_dir();
    io::write_text_file(g.out("metrics.csv"), rep.to_csv());
    io::write_text_file(g.out("metrics.json"), rep.to_json().dump(2) + "\n");
    json cfg{{"checkpoint", eo.checkpoint}, {"data", eo.data}, {"task", eo.task},
             {"mask_prob", eo.mask_prob}};
    config::write_manifest(g.out_dir, "eval", cfg, g.seed, {"metrics.csv", "metrics.json"});
    std::cout << rep.to_csv();
    return 0;
}

struct GenerateOpts {
    std::string checkpoint;
    std::string vocab;
    std::string input;
    std::string decode = "greedy";
    int max_per_blank = 8;
};

int cmd_generate(const GlobalOpts& g, const GenerateOpts& go) {
    model::LoadedModel lm = model::load_checkpoint(go.checkpoint);
    const RegionVocabulary vocab = io::read_vocabulary_file(go.vocab);
    if (vocab.size() != lm.meta.vocab_size)
        throw ConfigError("generate: vocabulary size does not match checkpoint");
    const auto partials = io::read_partials_file(go.input);
    const infer::Decode decode = infer::decode_from_name(go.decode);

    g.ensure_out_dir();
    std::ofstream os(g.out("completed.jsonl"), std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + g.out("completed.jsonl"));
    json diagnostics = json::array();
    for (std::size_t i = 0; i < partials.size(); ++i) {
        const infer::InfillResult res =
            infer::infill(*lm.model, lm.meta, vocab, partials[i].tokens, decode, go.max_per_blank,
                          mix_seed(g.seed, i), partials[i].agent);
        os << io::sequence_to_jsonl(res.sequence) << '\n';
        diagnostics.push_back(json{{"agent", partials[i].agent},
                                   {"per_blank_counts", res.diag.per_blank_counts},
                                   {"ans_count", res.diag.ans_count},
                                   {"chronological", res.diag.chronological},
                                   {"truncated", res.diag.truncated},
                                   {"message", res.diag.message}});
    }
    os.close();
    io::write_text_file(g.out("diagnostics.json"), diagnostics.dump(2) + "\n");
    json cfg{{"checkpoint", go.checkpoint}, {"input", go.input}, {"decode", go.decode},
             {"max_per_blank", go.max_per_blank}};
    config::write_manifest(g.out_dir, "generate", cfg, g.seed,
                           {"completed.jsonl", "diagnostics.json"});
    std::cerr << "generate: " << partials.size() << " sequences -> " << g.out_dir << "\n";
    return 0;
}

int cmd_ablate(const GlobalOpts& g, const TrainOpts& to) {
    const config::RunConfig rc = g.run_config();
    model::ModelConfig mc = model::ModelConfig::desk();
    config::apply_model(rc.section("model"), mc);
    if (!to.preset.empty()) config::apply_model(json{{"preset", to.preset}}, mc);
    prep::SplitSpec spec;
    config::apply_split(rc.section("split"), spec);
    if (to.window > 0) spec.window = to.window;
    if (to.mask_prob >= 0.0) spec.mask_prob = to.mask_prob;

    train::TrainOptions opt;
    opt.learning_rate = mc.learning_rate;
    opt.batch_size = mc.batch_size;
    opt.max_epochs = 30;
    config::apply_train(rc.section("train"), opt);
    if (to.max_epochs > 0) opt.max_epochs = to.max_epochs;
    opt.seed = g.seed;
    opt.mask_prob = spec.mask_prob;

    const train::Task task = train::task_from_name(to.task);
    const PreparedData data = prepare_training_data(to.data, to.vocab, task, spec, g.seed);

    g.ensure_out_dir();
    std::string csv =
        "variant,acc@1,acc@5,acc@10,acc@20,arrival_p5,arrival_p10,arrival_p20,"
        "departure_p5,departure_p10,departure_p20,region_positions\n";
    for (const model::Variant variant :
         {model::Variant::Full, model::Variant::Independence, model::Variant::Regression}) {
        TrainArtifacts art = run_training(data, mc, variant, task, opt, to.verbose);
        const auto instances = eval_instances(data.splits.test, task, data.vocab, data.scaling,
                                              spec.mask_prob, g.seed);
        const train::MetricsReport rep =
            train::evaluate(*art.net, instances, data.scaling, g.effective_threads());
        char row[512];
        std::snprintf(row, sizeof(row),
                      "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%zu\n",
                      model::variant_name(variant), rep.acc.at(1), rep.acc.at(5), rep.acc.at(10),
                      rep.acc.at(20), rep.arrival_p.at(5), rep.arrival_p.at(10),
                      rep.arrival_p.at(20), rep.departure_p.at(5), rep.departure_p.at(10),
                      rep.departure_p.at(20), rep.region_positions);
        csv += row;
        model::save_checkpoint(g.out(std::string("model_") + model::variant_name(variant) +
                                     ".ckpt"),
                               art.meta, art.net->store());
        std::cerr << "ablate: finished variant " << model::variant_name(variant) << "\n";
    }
    io::write_text_file(g.out("ablation.csv"), csv);
    json cfg;
    model::to_json(cfg, mc);
    cfg["task"] = to.task;
    cfg["max_epochs"] = opt.max_epochs;
    config::write_manifest(g.out_dir, "ablate", cfg, g.seed, {"ablation.csv"});
    std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"visit-sequence generative modeling pipeline"};
    app.require_subcommand(1);

    GlobalOpts g;
    synth::SynthConfig synth_cfg;
    PreprocessOpts pre_opts;
    prep::SplitSpec split_spec;
    TrainOpts train_opts;
    EvalOpts eval_opts;
    GenerateOpts gen_opts;
    TrainOpts ablate_opts;

    // Config file values seed the bound defaults before parsing, so
    // explicitly passed flags override the file.
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        std::string path;
        if (arg == "--config" && i + 1 < argc)
            path = argv[i + 1];
        else if (arg.rfind("--config=", 0) == 0)
            path = arg.substr(9);
        if (path.empty()) continue;
        try {
            const config::RunConfig rc = config::RunConfig::load(path);
            config::apply_synth(rc.section("synth"), synth_cfg);
            config::apply_split(rc.section("split"), split_spec);
        } catch (const Error& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
        break;
    }

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate synthetic visit sequences");
    add_global_opts(synth_cmd, g);
    synth_cmd->add_option("--n-agents", synth_cfg.n_agents, "number of agents");
    synth_cmd->add_option("--n-days", synth_cfg.n_days, "number of days");
    synth_cmd->add_option("--grid-extent", synth_cfg.grid_extent, "grid cells per side");
    synth_cmd->add_option("--cell-size", synth_cfg.cell_size, "grid cell size in meters");
    synth_cmd->add_option("--bimodal-fraction", synth_cfg.bimodal_fraction,
                          "probability a travel leg draws the slow mode");
    synth_cmd->add_option("--schedule-noise-min", synth_cfg.schedule_noise_min,
                          "schedule noise std in minutes");
    synth_cmd->add_option("--lunch-prob", synth_cfg.lunch_prob, "weekday lunch probability");
    synth_cmd->add_option("--recreation-prob", synth_cfg.recreation_prob,
                          "weekend outing probability");

    CLI::App* pre_cmd = app.add_subcommand("preprocess", "raw trajectories to visit sequences");
    add_global_opts(pre_cmd, g);
    pre_cmd->add_option("--input", pre_opts.input, "GeoLife root directory or CSV file")
        ->required();
    pre_cmd->add_option("--format", pre_opts.format, "auto|plt|csv");
    pre_cmd->add_option("--cell-size", pre_opts.cell_size, "grid cell size in meters");
    pre_cmd->add_option("--radius", pre_opts.radius, "stay-point radius in meters");
    pre_cmd->add_option("--min-duration", pre_opts.min_duration,
                        "stay-point minimum duration in seconds");
    pre_cmd->add_option("--ref-lat", pre_opts.ref_lat, "projection reference latitude");
    pre_cmd->add_option("--ref-lon", pre_opts.ref_lon, "projection reference longitude");
    pre_cmd->add_option("--task", pre_opts.task, "next|infill (selects split mode)");
    pre_cmd->add_option("--window", split_spec.window, "rolling window size (next task)");
    pre_cmd->add_option("--mask-prob", split_spec.mask_prob, "visit drop probability (infill)");

    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    add_global_opts(train_cmd, g);
    train_cmd->add_option("--data", train_opts.data, "visit sequences (JSONL)")->required();
    train_cmd->add_option("--vocab", train_opts.vocab, "vocabulary JSON")->required();
    train_cmd->add_option("--task", train_opts.task, "next|infill");
    train_cmd->add_option("--variant", train_opts.variant, "full|independence|regression");
    train_cmd->add_option("--preset", train_opts.preset, "model preset: desk|geolife|mobilitysim");
    train_cmd->add_option("--max-epochs", train_opts.max_epochs, "epoch limit");
    train_cmd->add_option("--window", train_opts.window, "rolling window size (next task)");
    train_cmd->add_option("--mask-prob", train_opts.mask_prob, "visit drop probability (infill)");
    train_cmd->add_flag("--verbose", train_opts.verbose, "per-epoch progress on stderr");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_global_opts(eval_cmd, g);
    eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--data", eval_opts.data, "evaluation sequences (JSONL)")->required();
    eval_cmd->add_option("--vocab", eval_opts.vocab, "vocabulary JSON")->required();
    eval_cmd->add_option("--task", eval_opts.task, "next|infill");
    eval_cmd->add_option("--mask-prob", eval_opts.mask_prob, "visit drop probability (infill)");

    CLI::App* gen_cmd = app.add_subcommand("generate", "fill blanks in partial sequences");
    add_global_opts(gen_cmd, g);
    gen_cmd->add_option("--checkpoint", gen_opts.checkpoint, "model checkpoint")->required();
    gen_cmd->add_option("--vocab", gen_opts.vocab, "vocabulary JSON")->required();
    gen_cmd->add_option("--input", gen_opts.input, "partial sequences (JSONL with blank entries)")
        ->required();
    gen_cmd->add_option("--decode", gen_opts.decode, "greedy|sample");
    gen_cmd->add_option("--max-per-blank", gen_opts.max_per_blank,
                        "visit cap per blank before ANS is forced");

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "run full/independence/regression");
    add_global_opts(ablate_cmd, g);
    ablate_cmd->add_option("--data", ablate_opts.data, "visit sequences (JSONL)")->required();
    ablate_cmd->add_option("--vocab", ablate_opts.vocab, "vocabulary JSON")->required();
    ablate_cmd->add_option("--task", ablate_opts.task, "next|infill");
    ablate_cmd->add_option("--preset", ablate_opts.preset, "model preset");
    ablate_cmd->add_option("--max-epochs", ablate_opts.max_epochs, "epoch limit per variant");
    ablate_cmd->add_option("--window", ablate_opts.window, "rolling window size (next task)");
    ablate_cmd->add_option("--mask-prob", ablate_opts.mask_prob, "visit drop probability");
    ablate_cmd->add_flag("--verbose", ablate_opts.verbose, "per-epoch progress on stderr");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage error
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(g, synth_cfg);
        if (pre_cmd->parsed()) return cmd_preprocess(g, pre_opts, split_spec);
        if (train_cmd->parsed()) return cmd_train(g, train_opts);
        if (eval_cmd->parsed()) return cmd_eval(g, eval_opts);
        if (gen_cmd->parsed()) return cmd_generate(g, gen_opts);
        if (ablate_cmd->parsed()) return cmd_ablate(g, ablate_opts);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
