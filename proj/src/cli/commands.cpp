#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "canids/checksum.hpp"
#include "canids/cli.hpp"
#include "canids/metrics.hpp"
#include "canids/quant.hpp"
#include "canids/serialize.hpp"

namespace canids::cli {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

constexpr const char* kMetaSuffix = ".meta.json";

struct CommonOptions {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string output_dir;
};

void add_common(CLI::App* app, CommonOptions& o) {
    app->add_option("-c,--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--set", o.overrides, "Override a config field, e.g. train.epochs=5");
    app->add_option("--seed", o.seed, "Override the run seed");
    app->add_option("-o,--output-dir", o.output_dir, "Override output_dir");
}

RunConfig resolve(const CommonOptions& o) {
    std::optional<fs::path> path;
    if (!o.config.empty()) path = o.config;
    RunConfig cfg = load_config(path, o.overrides);
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.train.seed = *o.seed;
    }
    if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
    return cfg;
}

Json provenance(const RunConfig& cfg, const char* command, const Json& inputs) {
    return {{"tool", "canids"}, {"command", command}, {"config", to_json(cfg)}, {"inputs", inputs}};
}

Json file_input(const fs::path& path, const char* role) {
    return {{"role", role}, {"path", path.string()}, {"sha256", sha256_file(path)}};
}

fs::path ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
    return dir;
}

/// Provenance for artifacts that cannot carry it inline (CSV).
void write_sidecar(const fs::path& artifact, Json meta) {
    meta["artifact"] = artifact.filename().string();
    meta["sha256"] = sha256_file(artifact);
    io::write_json_file(artifact.string() + kMetaSuffix, meta);
}

struct LogData {
    fs::path path;
    std::string attack;
    Json input;
    std::vector<LabeledFrame> frames;
    DatasetSplit<WindowFeature> split;
    std::vector<WindowFeature> all;
};

/// Attack name from the generator sidecar, else the file stem.
std::string attack_name(const fs::path& path) {
    const fs::path meta = path.string() + kMetaSuffix;
    if (fs::exists(meta)) {
        const Json j = io::read_json_file(meta);
        if (j.contains("attack")) return j.at("attack").get<std::string>();
    }
    return path.stem().string();
}

LogData load_log(const fs::path& path, const RunConfig& cfg, const char* role) {
    if (!fs::exists(path)) throw DataError("missing log file " + path.string());
    LogData d;
    d.path = path;
    d.attack = attack_name(path);
    d.frames = read_log_file(path);
    if (d.frames.empty()) throw DataError("log " + path.string() + " holds no frames");
    d.all = windows_of(d.frames, cfg.window);
    d.split = split_dataset<WindowFeature>(d.all, cfg.split);
    d.input = file_input(path, role);
    d.input["attack"] = d.attack;
    d.input["frames"] = d.frames.size();
    d.input["windows"] = d.all.size();
    d.input["split"] = {{"train", d.split.train.size()},
                        {"validation", d.split.validation.size()},
                        {"test", d.split.test.size()},
                        {"order", "chronological"}};
    return d;
}

const std::vector<WindowFeature>& pick_split(const LogData& d, const std::string& which) {
    if (which == "train") return d.split.train;
    if (which == "validation") return d.split.validation;
    if (which == "test") return d.split.test;
    return d.all;
}

std::vector<int> labels_of(std::span<const WindowFeature> windows) {
    std::vector<int> labels;
    labels.reserve(windows.size());
    for (const auto& w : windows) labels.push_back(w.label == Label::Attack ? 1 : 0);
    return labels;
}

// ---------------------------------------------------------------------------

int cmd_generate(const RunConfig& cfg, const std::string& output, std::ostream& out) {
    const SyntheticConfig syn = synthetic_config(cfg);
    const auto frames = generate_synthetic_log(syn);
    const fs::path path = output.empty() ? fs::path(cfg.output_dir) / (std::string(to_string(syn.attack_kind)) + ".csv")
                                         : fs::path(output);
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    write_log_file(path, frames);

    const LabelCounts counts = count_labels(frames);
    Json meta = provenance(cfg, "generate", Json::array());
    meta["attack"] = to_string(syn.attack_kind);
    meta["duration_s"] = syn.duration;
    meta["counts"] = {{"frames", counts.total()},
                      {"normal", counts.normal},
                      {"attack", counts.attack},
                      {"attack_fraction", counts.attack_fraction()}};
    write_sidecar(path, meta);

    char line[256];
    std::snprintf(line, sizeof line, "%s: %zu frames, %zu normal, %zu attack (fraction %.4f)\n",
                  path.string().c_str(), counts.total(), counts.normal, counts.attack, counts.attack_fraction());
    out << line;
    return kExitOk;
}

struct TrainArgs {
    std::string data;
    std::string transfer_from;
    std::string rehearse;
    std::string name = "model";
};

void write_history_csv(const fs::path& path, const nn::TrainHistory& h) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << "epoch,train_loss,val_loss,val_accuracy,checkpoint\n";
    char buf[512];
    for (const auto& e : h.epochs) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%s\n", e.epoch, e.train_loss, e.val_loss, e.val_accuracy,
                      fs::path(e.checkpoint).filename().string().c_str());
        f << buf;
    }
    if (!f) throw DataError("failed writing " + path.string());
}

Json history_json(const nn::TrainHistory& h) {
    Json epochs = Json::array();
    for (const auto& e : h.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_loss", e.val_loss},
                          {"val_accuracy", e.val_accuracy}});
    }
    return {{"initial_val_loss", h.initial_val_loss},
            {"initial_val_accuracy", h.initial_val_accuracy},
            {"best_epoch", h.best_epoch},
            {"stopped_early", h.stopped_early},
            {"epochs", epochs}};
}

int cmd_train(const RunConfig& cfg, const TrainArgs& args, std::ostream& out) {
    const fs::path dir = ensure_dir(fs::path(cfg.output_dir) / args.name);
    const LogData data = load_log(args.data, cfg, "train_log");
    Json inputs = Json::array({data.input});
    nn::Dataset train_set = nn::make_dataset(data.split.train);
    nn::Dataset val_set = nn::make_dataset(data.split.validation);
    if (train_set.empty() || val_set.empty()) throw DataError("log too short for a train/validation split");

    nn::TrainConfig tc = cfg.train;
    if (tc.checkpoint_every_epoch) tc.checkpoint_dir = ensure_dir(dir / "checkpoints");

    nn::TrainResult result;
    Json report;
    if (!args.transfer_from.empty()) {
        if (!fs::exists(args.transfer_from)) throw DataError("missing checkpoint " + args.transfer_from);
        const nn::MlpModel start = io::load_checkpoint(args.transfer_from);
        if (static_cast<std::size_t>(start.spec.input_width()) != cfg.window.width()) {
            throw ConfigError("checkpoint input width does not match the window width");
        }
        inputs.push_back(file_input(args.transfer_from, "transfer_from"));
        if (cfg.rehearsal && !args.rehearse.empty()) {
            const LogData first = load_log(args.rehearse, cfg, "rehearsal_log");
            inputs.push_back(first.input);
            train_set = nn::concat(train_set, nn::make_dataset(first.split.train));
            val_set = nn::concat(val_set, nn::make_dataset(first.split.validation));
        }
        result = nn::transfer_train(start, train_set, val_set, tc);
        const auto fresh = nn::init_model(start.spec, cfg.seed);
        const auto fresh_scores = nn::predict(fresh, val_set.x);
        nn::Vector<double> p(val_set.size());
        for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = fresh_scores[static_cast<std::size_t>(i)];
        report["fresh_init_val_loss"] = nn::bce_loss<double>(p, val_set.y.cast<double>());
    } else {
        result = nn::train(nn::init_model(cfg.model, cfg.seed), train_set, val_set, tc);
    }

    const Json prov = provenance(cfg, "train", inputs);
    const fs::path best = dir / "best.ckpt.json";
    io::save_checkpoint(best, result.model,
                        {{"provenance", prov},
                         {"best_epoch", result.history.best_epoch},
                         {"model_hash", io::model_hash(result.model)}});
    const fs::path history = dir / "history.csv";
    write_history_csv(history, result.history);
    write_sidecar(history, prov);

    report["provenance"] = prov;
    report["transfer"] = !args.transfer_from.empty();
    report["train_windows"] = train_set.size();
    report["validation_windows"] = val_set.size();
    report["dense_parameters"] = result.model.dense_parameter_count();
    report["trainable_parameters"] = result.model.trainable_parameter_count();
    report["history"] = history_json(result.history);
    report["best_checkpoint"] = {{"path", best.string()}, {"sha256", sha256_file(best)}};
    io::write_json_file(dir / "train_report.json", report);

    const auto& h = result.history;
    char line[256];
    std::snprintf(line, sizeof line, "trained %zu epochs%s; best epoch %d, validation accuracy %.6f\n",
                  h.epochs.size(), h.stopped_early ? " (early stop)" : "", h.best_epoch,
                  h.best_epoch >= 0 ? h.epochs[static_cast<std::size_t>(h.best_epoch)].val_accuracy : h.initial_val_accuracy);
    out << line << "checkpoint: " << best.string() << "\n";
    return kExitOk;
}

struct QuantizeArgs {
    std::string model;
    std::vector<std::string> data;
    std::string name = "quant";
};

Json scales_json(const quant::Scales& s) {
    Json layers = Json::array();
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
        const auto& ls = s.layers[l];
        layers.push_back({{"input_fraction_bits", ls.input.fraction_bits},
                          {"weight_fraction_bits", ls.weight.fraction_bits},
                          {"output_fraction_bits", ls.output.fraction_bits},
                          {"saturation_rate", l < s.saturation_rate.size() ? s.saturation_rate[l] : 0.0}});
    }
    return layers;
}

int cmd_quantize(const RunConfig& cfg, const QuantizeArgs& args, std::ostream& out) {
    if (!fs::exists(args.model)) throw DataError("missing checkpoint " + args.model);
    const fs::path dir = ensure_dir(fs::path(cfg.output_dir) / args.name);
    const nn::MlpModel model = io::load_checkpoint(args.model);
    if (static_cast<std::size_t>(model.spec.input_width()) != cfg.window.width()) {
        throw ConfigError("checkpoint input width does not match the window width");
    }
    Json inputs = Json::array({file_input(args.model, "model")});
    std::vector<WindowFeature> train_windows, val_windows;
    for (const auto& p : args.data) {
        const LogData d = load_log(p, cfg, "log");
        inputs.push_back(d.input);
        train_windows.insert(train_windows.end(), d.split.train.begin(), d.split.train.end());
        val_windows.insert(val_windows.end(), d.split.validation.begin(), d.split.validation.end());
    }
    if (train_windows.empty() || val_windows.empty()) throw DataError("quantize needs at least one log with train and validation windows");

    const nn::MlpModel folded = nn::fold_batchnorm(model);
    const quant::Scales scales = quant::calibrate(folded, quant::make_calibration_set(train_windows, cfg.quant.calibration_size));
    const quant::QuantModel plain = quant::quantize(folded, scales);

    nn::TrainConfig tc = cfg.train;
    tc.epochs = cfg.quant.finetune_epochs;
    tc.learning_rate = cfg.quant.finetune_learning_rate;
    tc.batch_size = cfg.quant.finetune_batch_size;
    const nn::Dataset train_set = nn::make_dataset(train_windows);
    const nn::Dataset val_set = nn::make_dataset(val_windows);
    const quant::FinetuneResult ft = quant::finetune_qat(folded, scales, train_set, val_set, tc);

    const auto float_scores = nn::predict(model, val_set.x);
    const auto plain_scores = quant::qpredict(plain, val_set.x);
    const auto tuned_scores = quant::qpredict(ft.model, val_set.x);

    const Json prov = provenance(cfg, "quantize", inputs);
    const fs::path bf = dir / "qmodel_bf.json";
    const fs::path af = dir / "qmodel_af.json";
    io::save_quant_model(bf, plain, {{"provenance", prov}, {"stage", "post-quantization, before fine-tuning"}});
    io::save_quant_model(af, ft.model,
                         {{"provenance", prov},
                          {"stage", "post-quantization, after fine-tuning"},
                          {"finetune_best_epoch", ft.history.best_epoch}});

    Json report = {{"provenance", prov},
                   {"scales", scales_json(scales)},
                   {"calibration_windows", std::min(train_windows.size(), cfg.quant.calibration_size)},
                   {"validation_accuracy",
                    {{"float", nn::accuracy(float_scores, val_set.y, cfg.threshold)},
                     {"before_finetune", ft.plain_val_accuracy},
                     {"after_finetune", ft.final_val_accuracy}}},
                   {"verdict_agreement_with_float",
                    {{"before_finetune", quant::verdict_agreement(float_scores, plain_scores, cfg.threshold)},
                     {"after_finetune", quant::verdict_agreement(float_scores, tuned_scores, cfg.threshold)}}},
                   {"finetune", history_json(ft.history)},
                   {"models",
                    {{"before_finetune", {{"path", bf.string()}, {"sha256", sha256_file(bf)}}},
                     {"after_finetune", {{"path", af.string()}, {"sha256", sha256_file(af)}}}}}};
    io::write_json_file(dir / "quant_report.json", report);

    char line[256];
    std::snprintf(line, sizeof line, "validation accuracy: float %.6f, int8 before fine-tune %.6f, after %.6f\n",
                  report["validation_accuracy"]["float"].get<double>(), ft.plain_val_accuracy, ft.final_val_accuracy);
    out << line << "models: " << bf.string() << ", " << af.string() << "\n";
    return kExitOk;
}

struct EvaluateArgs {
    std::string model;
    std::string qmodel_bf;
    std::string qmodel_af;
    std::vector<std::string> data;
    std::string split = "test";
    std::string name = "evaluation";
};

int cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& args, std::ostream& out) {
    if (!fs::exists(args.model)) throw DataError("missing checkpoint " + args.model);
    const fs::path dir = ensure_dir(fs::path(cfg.output_dir) / args.name);
    Json inputs = Json::array({file_input(args.model, "model")});
    const nn::MlpModel model = io::load_checkpoint(args.model);
    const auto width = static_cast<int>(cfg.window.width());
    if (model.spec.input_width() != width) throw ConfigError("model input width does not match the window width");

    std::optional<quant::QuantModel> bf, af;
    auto load_q = [&](const std::string& path, const char* role) {
        if (!fs::exists(path)) throw DataError(std::string("missing quantized model ") + path);
        quant::QuantModel q = io::load_quant_model(path);
        if (q.input_width() != width) throw ConfigError("quantized model input width does not match the window width");
        inputs.push_back(file_input(path, role));
        return q;
    };
    if (!args.qmodel_bf.empty()) bf = load_q(args.qmodel_bf, "qmodel_bf");
    if (!args.qmodel_af.empty()) af = load_q(args.qmodel_af, "qmodel_af");

    Json attacks = Json::array();
    std::string table;
    for (const auto& p : args.data) {
        const LogData d = load_log(p, cfg, "log");
        inputs.push_back(d.input);
        const auto& windows = pick_split(d, args.split);
        if (windows.empty()) throw DataError("split '" + args.split + "' of " + p + " is empty");
        const auto labels = labels_of(windows);
        const nn::Dataset ds = nn::make_dataset(windows);

        std::vector<std::pair<std::string, metrics::MetricsReport>> rows;
        Json results = Json::object();
        auto add = [&](const char* key, const char* label, const std::vector<double>& scores) {
            const auto r = metrics::evaluate_scores(scores, labels, cfg.threshold);
            results[key] = metrics::to_json(r);
            rows.emplace_back(label, r);
        };
        add("pre_quantization", "Pre-Q", nn::predict(model, ds.x));
        if (bf) add("post_quantization_bf", "Post-Q BF", quant::qpredict(*bf, windows));
        if (af) add("post_quantization_af", "Post-Q AF", quant::qpredict(*af, windows));

        attacks.push_back({{"attack", d.attack}, {"log", p}, {"windows", windows.size()}, {"results", results}});
        table += "[" + d.attack + "] " + std::to_string(windows.size()) + " windows (" + args.split + " split)\n";
        table += metrics::format_table(rows) + "\n";
    }

    const Json report = {{"provenance", provenance(cfg, "evaluate", inputs)},
                         {"split", args.split},
                         {"threshold", cfg.threshold},
                         {"attacks", attacks}};
    io::write_json_file(dir / "evaluation.json", report);
    {
        std::ofstream f(dir / "evaluation.txt");
        if (!f) throw DataError("cannot write " + (dir / "evaluation.txt").string());
        f << table;
    }
    out << table;
    return kExitOk;
}

struct ReplayArgs {
    std::string detector_1;
    std::string detector_2;
    std::string log;
    std::string mode;
    std::string name = "replay";
};

int cmd_replay(const RunConfig& cfg, const ReplayArgs& args, std::ostream& out) {
    for (const auto* p : {&args.detector_1, &args.detector_2, &args.log}) {
        if (!fs::exists(*p)) throw DataError("missing file " + *p);
    }
    const fs::path dir = ensure_dir(fs::path(cfg.output_dir) / args.name);
    engine::DetectorPair pair{std::make_shared<const quant::QuantModel>(io::load_quant_model(args.detector_1)),
                              std::make_shared<const quant::QuantModel>(io::load_quant_model(args.detector_2))};
    const auto frames = read_log_file(args.log);
    const Json inputs = Json::array(
        {file_input(args.detector_1, "detector_1"), file_input(args.detector_2, "detector_2"), file_input(args.log, "log")});

    engine::ReplayOptions opts;
    opts.mode = args.mode.empty() ? cfg.replay.mode : engine::parse_replay_mode(args.mode);
    opts.window = cfg.window;
    opts.pipeline.queue_depth = cfg.replay.queue_depth;
    opts.pipeline.threshold = cfg.threshold;
    opts.time_scale = cfg.replay.time_scale;
    RunConfig effective = cfg;
    effective.replay.mode = opts.mode;

    const engine::ReplayReport rep = engine::replay(frames, pair, opts);

    const fs::path csv = dir / "verdicts.csv";
    {
        std::ofstream f(csv);
        if (!f) throw DataError("cannot write " + csv.string());
        engine::write_verdicts_csv(f, rep.verdicts);
    }
    const Json prov = provenance(effective, "replay", inputs);
    write_sidecar(csv, prov);

    Json report = engine::to_json(rep);
    report["provenance"] = prov;
    report["verdict_stream"] = {{"path", csv.string()}, {"sha256", sha256_file(csv)}};
    if (!rep.verdicts.empty()) {
        metrics::ConfusionMatrix cm;
        for (const auto& v : rep.verdicts) {
            const bool actual = v.label == Label::Attack;
            if (actual) {
                ++(v.attack() ? cm.tp : cm.fn);
            } else {
                ++(v.attack() ? cm.fp : cm.tn);
            }
        }
        report["detection"] = metrics::to_json(metrics::derive_metrics(cm));
    }
    io::write_json_file(dir / "replay_report.json", report);

    char line[512];
    std::snprintf(line, sizeof line,
                  "%zu messages, %zu warm-up, %zu verdicts in %.3f s: %.0f msg/s, %.1f kbit/s at %d bits/frame\n"
                  "latency us: mean %.1f p50 %.1f p99 %.1f max %.1f\n",
                  rep.total_messages, rep.warmup_skipped, rep.verdict_count, rep.wall_seconds, rep.throughput,
                  rep.line_rate_kbps, rep.bits_per_frame, rep.latency.mean * 1e6, rep.latency.p50 * 1e6,
                  rep.latency.p99 * 1e6, rep.latency.max * 1e6);
    out << line;
    return kExitOk;
}

int cmd_report(const RunConfig& cfg, const std::string& run_dir, std::ostream& out) {
    const fs::path root = run_dir.empty() ? fs::path(cfg.output_dir) : fs::path(run_dir);
    if (!fs::is_directory(root)) throw DataError("run directory " + root.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        const auto name = e.path().filename().string();
        if (name == "train_report.json" || name == "quant_report.json" || name == "evaluation.json" ||
            name == "replay_report.json") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());

    std::ostringstream md;
    Json summary = {{"run_dir", root.string()}, {"artifacts", Json::array()}};
    md << "# Run report: " << root.string() << "\n\n";
    for (const auto& f : files) {
        const Json j = io::read_json_file(f);
        const auto name = f.filename().string();
        const auto rel = fs::relative(f, root).string();
        summary["artifacts"].push_back({{"path", rel}, {"sha256", sha256_file(f)}});
        md << "## " << rel << "\n\n";
        if (name == "train_report.json") {
            const auto& h = j.at("history");
            md << "- epochs run: " << h.at("epochs").size() << ", best epoch: " << h.at("best_epoch")
               << ", early stop: " << (h.at("stopped_early").get<bool>() ? "yes" : "no") << "\n";
            md << "- initial validation loss: " << h.at("initial_val_loss") << "\n";
            if (j.contains("fresh_init_val_loss")) md << "- fresh-init validation loss: " << j.at("fresh_init_val_loss") << "\n";
            md << "- dense parameters: " << j.at("dense_parameters") << "\n\n";
        } else if (name == "quant_report.json") {
            const auto& a = j.at("validation_accuracy");
            md << "- validation accuracy float / BF / AF: " << a.at("float") << " / " << a.at("before_finetune") << " / "
               << a.at("after_finetune") << "\n\n";
        } else if (name == "evaluation.json") {
            md << "| Attack | Model | Precision | Recall | F1 | FPR | FNR | AUC |\n|---|---|---|---|---|---|---|---|\n";
            for (const auto& a : j.at("attacks")) {
                for (const auto& [key, r] : a.at("results").items()) {
                    md << "| " << a.at("attack").get<std::string>() << " | " << key << " | "
                       << r.at("precision").at("display").get<std::string>() << " | "
                       << r.at("recall").at("display").get<std::string>() << " | "
                       << r.at("f1").at("display").get<std::string>() << " | "
                       << r.at("fpr").at("display").get<std::string>() << " | "
                       << r.at("fnr").at("display").get<std::string>() << " | " << r.at("auc").dump() << " |\n";
                }
            }
            md << "\n";
        } else {
            md << "- mode: " << j.at("mode").get<std::string>() << ", verdicts: " << j.at("verdicts")
               << ", throughput msg/s: " << j.at("throughput_msgs_per_s") << ", line rate kbit/s: "
               << j.at("line_rate_kbps") << "\n";
            const auto& l = j.at("latency_us");
            md << "- latency us mean/p50/p99/max: " << l.at("mean") << " / " << l.at("p50") << " / " << l.at("p99")
               << " / " << l.at("max") << "\n\n";
        }
    }
    const fs::path md_path = root / "report.md";
    {
        std::ofstream f(md_path);
        if (!f) throw DataError("cannot write " + md_path.string());
        f << md.str();
    }
    io::write_json_file(root / "report.json", summary);
    out << md.str();
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"CAN intrusion detection: synthetic traffic, MLP training, INT8 quantization, replay"};
    app.require_subcommand(1);

    CommonOptions gen_o, train_o, quant_o, eval_o, replay_o, report_o;
    std::string gen_output, gen_attack;
    std::optional<std::size_t> gen_frames;
    auto* gen = app.add_subcommand("generate", "Write a synthetic labeled CAN log");
    add_common(gen, gen_o);
    gen->add_option("--attack", gen_attack, "dos, fuzzy, rpm or gear");
    gen->add_option("--frames", gen_frames, "Approximate frame count");
    gen->add_option("--output", gen_output, "CSV path (default <output_dir>/<attack>.csv)");

    TrainArgs train_a;
    auto* trn = app.add_subcommand("train", "Train a detector on one log");
    add_common(trn, train_o);
    trn->add_option("--data", train_a.data, "Labeled log")->required();
    trn->add_option("--transfer-from", train_a.transfer_from, "Warm-start checkpoint");
    trn->add_option("--rehearse", train_a.rehearse, "First-stage log mixed into a transfer run");
    trn->add_option("--name", train_a.name, "Output subdirectory");

    QuantizeArgs quant_a;
    auto* qnt = app.add_subcommand("quantize", "Calibrate, quantize and fine-tune a checkpoint");
    add_common(qnt, quant_o);
    qnt->add_option("--model", quant_a.model, "Float checkpoint")->required();
    qnt->add_option("--data", quant_a.data, "Logs for calibration and fine-tuning")->required();
    qnt->add_option("--name", quant_a.name, "Output subdirectory");

    EvaluateArgs eval_a;
    auto* evl = app.add_subcommand("evaluate", "Pre- and post-quantization metrics per attack");
    add_common(evl, eval_o);
    evl->add_option("--model", eval_a.model, "Float checkpoint")->required();
    evl->add_option("--qmodel-bf", eval_a.qmodel_bf, "Quantized model before fine-tuning");
    evl->add_option("--qmodel-af", eval_a.qmodel_af, "Quantized model after fine-tuning");
    evl->add_option("--data", eval_a.data, "Labeled logs")->required();
    evl->add_option("--split", eval_a.split, "train, validation, test or all")
        ->check(CLI::IsMember({"train", "validation", "test", "all"}));
    evl->add_option("--name", eval_a.name, "Output subdirectory");

    ReplayArgs replay_a;
    auto* rpl = app.add_subcommand("replay", "Replay a log through both quantized detectors");
    add_common(rpl, replay_o);
    rpl->add_option("--detector1", replay_a.detector_1, "Quantized DoS/fuzzing detector")->required();
    rpl->add_option("--detector2", replay_a.detector_2, "Quantized spoofing detector")->required();
    rpl->add_option("--log", replay_a.log, "CAN log")->required();
    rpl->add_option("--mode", replay_a.mode, "max_rate or timestamped");
    rpl->add_option("--name", replay_a.name, "Output subdirectory");

    std::string report_dir;
    auto* rep = app.add_subcommand("report", "Summarise the artifacts of a run directory");
    add_common(rep, report_o);
    rep->add_option("--run-dir", report_dir, "Run directory (default output_dir)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (gen->parsed()) {
            auto o = gen_o;
            if (!gen_attack.empty()) o.overrides.push_back("synthetic.attack=" + Json(gen_attack).dump());
            if (gen_frames) o.overrides.push_back("synthetic.frames=" + std::to_string(*gen_frames));
            return cmd_generate(resolve(o), gen_output, out);
        }
        if (trn->parsed()) return cmd_train(resolve(train_o), train_a, out);
        if (qnt->parsed()) return cmd_quantize(resolve(quant_o), quant_a, out);
        if (evl->parsed()) return cmd_evaluate(resolve(eval_o), eval_a, out);
        if (rpl->parsed()) return cmd_replay(resolve(replay_o), replay_a, out);
        if (rep->parsed()) return cmd_report(resolve(report_o), report_dir, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const nlohmann::json::exception& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    err << "error: no command given\n";
    return kExitConfig;
}

}  // namespace canids::cli
