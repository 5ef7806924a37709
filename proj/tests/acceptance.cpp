// End-to-end acceptance run: one PASS/FAIL/SKIP line per criterion.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "canids/cli.hpp"
#include "canids/metrics.hpp"
#include "canids/serialize.hpp"
#include "fixtures.hpp"

using namespace canids;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

// Tolerances.
constexpr double kMetricTolerance = 0.01;        // percentage points
constexpr double kFoldTolerance = 1e-5;          // probability
constexpr double kGradTolerance = 1e-4;          // relative error
constexpr double kF1FloorStrict = 99.0;          // DoS, RPM, Gear
constexpr double kF1FloorFuzzy = 97.0;
constexpr double kQuantDropMax = 1.0;            // F1 points, float to fine-tuned int8
constexpr double kTransferDropMax = 1.0;         // DoS F1 points across the transfer
constexpr double kAucFloor = 0.99;
constexpr double kDatasetF1Floor = 99.0;
constexpr double kThroughputFloor = 4166.0;      // messages per second
constexpr std::size_t kDeskFrames = 50'000;      // per attack log, 200k in total
constexpr std::size_t kKernelLayers = 1000;
constexpr std::size_t kFoldModels = 1000;
constexpr std::size_t kReplayMessages = 10'000;

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status;
    std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void cli_or_throw(std::vector<std::string> args) {
    args.insert(args.begin(), "canids");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) throw std::runtime_error("canids " + args[1] + " exited " + std::to_string(code) + ": " + err.str());
}

// ---------------------------------------------------------------------------

Outcome metric_reproduction() {
    struct Row {
        metrics::ConfusionMatrix cm;
        double cells[5];  // precision, recall, F1, FPR, FNR in percent
    };
    const Row rows[] = {
        {{33282, 13, 0, 16705}, {99.92, 100, 99.96, 0.04, 0}},
        {{38806, 16, 37, 11141}, {99.86, 99.67, 99.76, 0.04, 0.33}},
        {{40221, 0, 0, 9779}, {100, 100, 100, 0, 0}},
        {{41352, 9, 0, 8639}, {99.90, 100, 99.95, 0.02, 0}},
    };
    double worst = 0.0;
    int cells = 0;
    for (const auto& row : rows) {
        const auto r = metrics::derive_metrics(row.cm);
        const metrics::Ratio* got[] = {&r.precision, &r.recall, &r.f1, &r.fpr, &r.fnr};
        for (int i = 0; i < 5; ++i, ++cells) {
            const double rounded = static_cast<double>(*got[i]->percent_hundredths()) / 100.0;
            worst = std::max(worst, std::abs(rounded - row.cells[i]));
        }
    }
    return pass_if(worst <= kMetricTolerance + 1e-9, fmt("%d cells, max deviation %.4f pp", cells, worst));
}

Outcome kernel_oracle() {
    using namespace fixtures;
    std::mt19937_64 gen(20241015);
    std::uniform_int_distribution<int> width(1, 16);
    std::uniform_int_distribution<int> frac(0, 9);
    std::size_t outputs = 0, mismatches = 0;
    for (std::size_t t = 0; t < kKernelLayers; ++t) {
        QuantModel layer;
        const int in = width(gen);
        const int out = width(gen);
        layer.layers.push_back(random_layer(gen, in, out, 0, frac(gen), frac(gen) - 2, 1 << 12));
        for (int u = 0; u < out; ++u) {
            const auto probe = with_readout(layer, u);
            for (int s = 0; s < 3; ++s) {
                const auto x = random_input(gen, in);
                const auto want = oracle_forward(probe, x).hidden[0][static_cast<std::size_t>(u)];
                ++outputs;
                if (qforward_logit_accumulator(probe, x) != want) ++mismatches;
            }
        }
    }
    return pass_if(mismatches == 0, fmt("%zu layers, %zu int8 outputs, %zu mismatches", kKernelLayers, outputs, mismatches));
}

Outcome folding() {
    using namespace fixtures;
    std::mt19937_64 gen(77);
    std::uniform_int_distribution<int> width(1, 12);
    double worst = 0.0;
    for (std::size_t t = 0; t < kFoldModels; ++t) {
        ModelSpec spec;
        spec.layer_units = {40, width(gen), width(gen), 1};
        const Matrix<double> calib = random_bytes(64, 40, gen);
        const auto m = data_consistent_model(spec, calib, gen).cast<float>();
        const auto f = fold_batchnorm(m);
        const Matrix<float> x = random_bytes(8, 40, gen).cast<float>();
        const auto a = forward_batch(m, x, Mode::Infer);
        const auto b = forward_batch(f, x, Mode::Infer);
        worst = std::max(worst, static_cast<double>((a - b).cwiseAbs().maxCoeff()));
    }
    return pass_if(worst <= kFoldTolerance, fmt("%zu models, max |folded - unfolded| = %.3g", kFoldModels, worst));
}

Outcome gradients() {
    using namespace fixtures;
    std::mt19937_64 gen(4);
    double worst = 0.0;
    std::size_t params = 0, largest = 0;
    const std::vector<std::vector<int>> shapes = {{6, 8, 6, 1}, {10, 12, 8, 4, 1}, {5, 20, 1}, {12, 16, 10, 1}};
    for (int t = 0; t < 24; ++t) {
        ModelSpec spec;
        spec.layer_units = shapes[static_cast<std::size_t>(t) % shapes.size()];
        spec.batchnorm = t % 4 != 3;
        spec.dropout_rate = 0.0;
        const auto m = random_model(spec, gen);
        largest = std::max(largest, m.trainable_parameter_count());
        const auto x = random_batch(16, spec.layer_units.front(), gen);
        Vector<double> y(16);
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = static_cast<double>((i * 7 + t) % 3 == 0);
        const auto r = gradient_check(m, x, y, Mode::Train);
        worst = std::max(worst, r.max_relative_error);
        params += r.parameters_checked;
    }
    return pass_if(worst < kGradTolerance && largest <= 500,
                   fmt("%zu parameters over 24 models (max %zu each), max relative error %.3g", params, largest, worst));
}

// ---------------------------------------------------------------------------
// Detector pipeline through the command-line entry point.

struct PairResult {
    Json first_pre_transfer;  // first attack, stage-one model, test split
    Json evaluation;          // both attacks after transfer, pre-Q / BF / AF
    fs::path qmodel_af;
};

PairResult run_pair(const fs::path& dir, const fs::path& first, const fs::path& second, const std::string& tag,
                    const std::vector<std::string>& extra) {
    auto with = [&](std::vector<std::string> a) {
        a.push_back("-o");
        a.push_back(dir.string());
        a.insert(a.end(), extra.begin(), extra.end());
        return a;
    };
    const std::string stage1 = tag + "_stage1";
    cli_or_throw(with({"train", "--data", first.string(), "--name", stage1}));
    const fs::path stage1_ckpt = dir / stage1 / "best.ckpt.json";
    cli_or_throw(with({"evaluate", "--model", stage1_ckpt.string(), "--data", first.string(), "--name", stage1 + "_eval"}));

    cli_or_throw(with({"train", "--data", second.string(), "--transfer-from", stage1_ckpt.string(), "--rehearse",
                       first.string(), "--name", tag}));
    const fs::path ckpt = dir / tag / "best.ckpt.json";
    cli_or_throw(with({"quantize", "--model", ckpt.string(), "--data", first.string(), "--data", second.string(),
                       "--name", tag + "_quant"}));
    const fs::path bf = dir / (tag + "_quant") / "qmodel_bf.json";
    const fs::path af = dir / (tag + "_quant") / "qmodel_af.json";
    cli_or_throw(with({"evaluate", "--model", ckpt.string(), "--qmodel-bf", bf.string(), "--qmodel-af", af.string(),
                       "--data", first.string(), "--data", second.string(), "--name", tag + "_eval"}));

    return {io::read_json_file(dir / (stage1 + "_eval") / "evaluation.json")["attacks"][0]["results"]["pre_quantization"],
            io::read_json_file(dir / (tag + "_eval") / "evaluation.json"), af};
}

double f1_of(const Json& r) { return r["f1"]["value"].is_null() ? 0.0 : r["f1"]["value"].get<double>(); }
double auc_of(const Json& r) { return r["auc"].is_null() ? 0.0 : r["auc"].get<double>(); }

struct DeskRun {
    fs::path dir;
    fs::path mixed_log;
    PairResult d1, d2;
    bool ok = false;
};

DeskRun desk_run;

Outcome desk_scale(const fs::path& workdir) {
    const auto start = std::chrono::steady_clock::now();
    desk_run.dir = workdir / "desk";
    fs::remove_all(desk_run.dir);
    const std::pair<const char*, int> logs[] = {{"dos", 11}, {"fuzzy", 12}, {"rpm", 13}, {"gear", 14}};
    for (const auto& [attack, seed] : logs) {
        cli_or_throw({"generate", "--attack", attack, "--frames", std::to_string(kDeskFrames), "--seed",
                      std::to_string(seed), "-o", desk_run.dir.string()});
    }
    auto log = [&](const char* a) { return desk_run.dir / (std::string(a) + ".csv"); };
    desk_run.d1 = run_pair(desk_run.dir, log("dos"), log("fuzzy"), "detector1", {});
    desk_run.d2 = run_pair(desk_run.dir, log("rpm"), log("gear"), "detector2", {});
    desk_run.mixed_log = log("fuzzy");
    desk_run.ok = true;

    bool ok = true;
    std::string detail;
    auto check_pair = [&](const PairResult& p, double first_floor, double second_floor) {
        const auto& attacks = p.evaluation["attacks"];
        for (std::size_t i = 0; i < 2; ++i) {
            const auto& a = attacks[i];
            const auto& res = a["results"];
            const double floor = i == 0 ? first_floor : second_floor;
            const double f_float = f1_of(res["pre_quantization"]);
            const double f_bf = f1_of(res["post_quantization_bf"]);
            const double f_af = f1_of(res["post_quantization_af"]);
            const double auc_float = auc_of(res["pre_quantization"]);
            const double auc_af = auc_of(res["post_quantization_af"]);
            ok = ok && f_float >= floor && f_float - f_af <= kQuantDropMax && auc_float >= kAucFloor && auc_af >= kAucFloor;
            detail += fmt("%s F1 %.2f/%.2f/%.2f AUC %.4f/%.4f; ", a["attack"].get<std::string>().c_str(), f_float, f_bf,
                          f_af, auc_float, auc_af);
        }
        const double before = f1_of(p.first_pre_transfer);
        const double after = f1_of(attacks[0]["results"]["pre_quantization"]);
        ok = ok && before - after <= kTransferDropMax;
        detail += fmt("first-attack F1 across transfer %.2f -> %.2f; ", before, after);
    };
    check_pair(desk_run.d1, kF1FloorStrict, kF1FloorFuzzy);
    check_pair(desk_run.d2, kF1FloorStrict, kF1FloorStrict);
    const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
    detail += fmt("F1 float/BF/AF, %.1f min", minutes);
    return pass_if(ok, detail);
}

Outcome dataset(const fs::path& workdir) {
    const char* env = std::getenv("CANIDS_DATASET_DIR");
    if (!env) return {Status::Skip, "CANIDS_DATASET_DIR not set"};
    const fs::path root(env);
    const char* files[] = {"DoS_dataset.csv", "Fuzzy_dataset.csv", "RPM_dataset.csv", "gear_dataset.csv"};
    for (const char* f : files) {
        if (!fs::exists(root / f)) return {Status::Skip, std::string(f) + " not found in " + root.string()};
    }
    const fs::path dir = workdir / "dataset";
    const auto d1 = run_pair(dir, root / files[0], root / files[1], "detector1", {});
    const auto d2 = run_pair(dir, root / files[2], root / files[3], "detector2", {});
    bool ok = true;
    std::string detail;
    for (const auto* p : {&d1, &d2}) {
        for (const auto& a : p->evaluation["attacks"]) {
            const double f = f1_of(a["results"]["post_quantization_af"]);
            ok = ok && f >= kDatasetF1Floor;
            detail += fmt("%s int8 F1 %.2f; ", a["attack"].get<std::string>().c_str(), f);
        }
    }
    return pass_if(ok, detail);
}

Outcome engine_ordering() {
    auto cfg = default_synthetic_config(AttackKind::Fuzzy, 5);
    cfg.duration = duration_for_frame_count(cfg, kReplayMessages + 3);
    const auto log = generate_synthetic_log(cfg);
    const auto windows = windows_of(log);

    auto detector = [&](std::uint64_t seed) {
        nn::ModelSpec spec;
        spec.layer_units = {40, 32, 16, 1};
        spec.batchnorm = false;
        auto m = nn::init_model(spec, seed);
        for (auto& d : m.dense) d.weight *= 0.1f;
        return std::make_shared<const quant::QuantModel>(
            quant::quantize(m, quant::calibrate(m, quant::make_calibration_set(windows))));
    };
    const engine::DetectorPair pair{detector(1), detector(2)};

    engine::ReplayOptions opts;
    opts.pipeline.queue_depth = 16;
    auto mu = std::make_shared<std::mutex>();
    auto rng = std::make_shared<std::mt19937_64>(99);
    opts.pipeline.before_inference = [mu, rng](int, engine::Ticket) {
        int us;
        {
            std::lock_guard lock(*mu);
            us = static_cast<int>((*rng)() % 5 == 0 ? (*rng)() % 400 : 0);
        }
        if (us > 0) std::this_thread::sleep_for(std::chrono::microseconds(us));
    };
    const auto rep = engine::replay(log, pair, opts);

    std::size_t out_of_order = 0, score_mismatch = 0;
    for (std::size_t i = 0; i < rep.verdicts.size(); ++i) {
        const auto& v = rep.verdicts[i];
        if (v.message_index != i) ++out_of_order;
        if (i < windows.size() && (v.score_1 != quant::qforward(*pair.detector_1, windows[i].values) ||
                                   v.score_2 != quant::qforward(*pair.detector_2, windows[i].values))) {
            ++score_mismatch;
        }
    }
    const bool complete = rep.verdicts.size() == windows.size() && windows.size() >= kReplayMessages;
    return pass_if(complete && out_of_order == 0 && score_mismatch == 0,
                   fmt("%zu verdicts for %zu windows, %zu out of order, %zu score mismatches", rep.verdicts.size(),
                       windows.size(), out_of_order, score_mismatch));
}

Outcome throughput(const fs::path& workdir) {
    if (!desk_run.ok) return {Status::Fail, "no trained detectors (desk-scale run failed)"};
    cli_or_throw({"replay", "--detector1", desk_run.d1.qmodel_af.string(), "--detector2", desk_run.d2.qmodel_af.string(),
                  "--log", desk_run.mixed_log.string(), "--mode", "max_rate", "-o", (workdir / "desk").string(), "--name",
                  "replay_max_rate"});
    const Json r = io::read_json_file(workdir / "desk" / "replay_max_rate" / "replay_report.json");
    const double rate = r["throughput_msgs_per_s"].get<double>();
    const auto& l = r["latency_us"];
    return pass_if(rate >= kThroughputFloor,
                   fmt("%.0f msg/s (%.0f kbit/s); latency us mean %.1f p50 %.1f p99 %.1f max %.1f", rate,
                       r["line_rate_kbps"].get<double>(), l["mean"].get<double>(), l["p50"].get<double>(),
                       l["p99"].get<double>(), l["max"].get<double>()));
}

Json metric_results(const fs::path& evaluation) {
    Json out = Json::array();
    for (const auto& a : io::read_json_file(evaluation)["attacks"]) out.push_back({a["attack"], a["windows"], a["results"]});
    return out;
}

Outcome reproducibility(const fs::path& workdir) {
    std::vector<Json> results;
    std::vector<std::string> hashes;
    for (const char* run : {"repro_a", "repro_b"}) {
        const fs::path dir = workdir / run;
        fs::remove_all(dir);
        const std::vector<std::string> common = {"--seed", "5", "-o", dir.string(), "--set", "train.epochs=3", "--set",
                                                 "quant.finetune_epochs=1"};
        auto with = [&](std::vector<std::string> a) {
            a.insert(a.end(), common.begin(), common.end());
            return a;
        };
        cli_or_throw(with({"generate", "--attack", "fuzzy", "--frames", "8000"}));
        const fs::path log = dir / "fuzzy.csv";
        cli_or_throw(with({"train", "--data", log.string()}));
        const fs::path ckpt = dir / "model" / "best.ckpt.json";
        cli_or_throw(with({"quantize", "--model", ckpt.string(), "--data", log.string()}));
        cli_or_throw(with({"evaluate", "--model", ckpt.string(), "--qmodel-bf", (dir / "quant" / "qmodel_bf.json").string(),
                           "--qmodel-af", (dir / "quant" / "qmodel_af.json").string(), "--data", log.string()}));
        results.push_back(metric_results(dir / "evaluation" / "evaluation.json"));
        hashes.push_back(io::model_hash(io::load_checkpoint(ckpt)));
    }
    const bool same = results[0] == results[1] && hashes[0] == hashes[1];
    return pass_if(same, same ? "two seeded runs: identical metric reports and model hash " + hashes[0].substr(0, 12)
                              : "metric reports differ between runs");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance run"};
    std::string workdir = "acceptance_work";
    app.add_option("--workdir", workdir, "Scratch directory for generated artifacts");
    CLI11_PARSE(app, argc, argv);
    const fs::path work(workdir);
    fs::create_directories(work);

    const std::pair<int, std::function<Outcome()>> criteria[] = {
        {1, metric_reproduction},
        {2, kernel_oracle},
        {3, folding},
        {4, gradients},
        {5, [&] { return desk_scale(work); }},
        {6, [&] { return dataset(work); }},
        {7, engine_ordering},
        {8, [&] { return throughput(work); }},
        {9, [&] { return reproducibility(work); }},
    };
    int failures = 0;
    for (const auto& [id, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {Status::Fail, std::string("exception: ") + e.what()};
        }
        const char* label = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
        if (o.status == Status::Fail) ++failures;
        std::cout << "criterion " << id << ": " << label << " - " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
