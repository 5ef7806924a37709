#include <algorithm>
#include <fstream>
#include <set>

#include "canids/cli.hpp"
#include "canids/serialize.hpp"

namespace canids::cli {

using Json = nlohmann::json;

void RunConfig::validate() const {
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    if (synthetic.frames < 1) throw ConfigError("synthetic.frames must be positive");
    if (synthetic.attack_rate && !(*synthetic.attack_rate > 0.0)) throw ConfigError("synthetic.attack_rate must be positive");
    if (synthetic.attack_fraction && !(*synthetic.attack_fraction > 0.0 && *synthetic.attack_fraction < 1.0)) {
        throw ConfigError("synthetic.attack_fraction must lie in (0,1)");
    }
    if (!(synthetic.burst_period > 0.0)) throw ConfigError("synthetic.burst_period must be positive");
    window.validate();
    split_sizes(0, split);
    model.validate();
    if (static_cast<std::size_t>(model.input_width()) != window.width()) {
        throw ConfigError("model input width " + std::to_string(model.input_width()) + " does not match window width " +
                          std::to_string(window.width()));
    }
    train.validate();
    if (quant.calibration_size < 1) throw ConfigError("quant.calibration_size must be positive");
    if (quant.finetune_epochs < 0) throw ConfigError("quant.finetune_epochs must be non-negative");
    if (!(quant.finetune_learning_rate > 0.0)) throw ConfigError("quant.finetune_learning_rate must be positive");
    if (quant.finetune_batch_size < 1) throw ConfigError("quant.finetune_batch_size must be positive");
    if (replay.queue_depth < 1) throw ConfigError("replay.queue_depth must be positive");
    if (!(replay.time_scale > 0.0)) throw ConfigError("replay.time_scale must be positive");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0,1]");
}

Json to_json(const RunConfig& c) {
    Json synthetic = {{"attack", to_string(c.synthetic.attack)},
                      {"frames", c.synthetic.frames},
                      {"burst_period", c.synthetic.burst_period},
                      {"profile_seed", c.synthetic.profile_seed}};
    // Per-attack defaults are resolved so the document is complete.
    const SyntheticConfig resolved = synthetic_config(c);
    synthetic["attack_rate"] = resolved.attack_rate;
    synthetic["attack_fraction"] = resolved.attack_fraction_target;

    Json model = io::spec_to_json(c.model);
    return {{"seed", c.seed},
            {"output_dir", c.output_dir},
            {"synthetic", synthetic},
            {"window", {{"depth", c.window.depth}, {"bytes_per_message", WindowConfig::kBytesPerMessage}}},
            {"split",
             {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}, {"order", "chronological"}}},
            {"model", model},
            {"train",
             {{"learning_rate", c.train.learning_rate},
              {"epochs", c.train.epochs},
              {"batch_size", c.train.batch_size},
              {"beta1", c.train.beta1},
              {"beta2", c.train.beta2},
              {"adam_epsilon", c.train.adam_epsilon},
              {"checkpoint_every_epoch", c.train.checkpoint_every_epoch},
              {"early_stop",
               {{"enabled", c.train.early_stop.enabled},
                {"max_drop", c.train.early_stop.max_drop},
                {"patience", c.train.early_stop.patience}}},
              {"rehearsal", c.rehearsal}}},
            {"quant",
             {{"calibration_size", c.quant.calibration_size},
              {"finetune_epochs", c.quant.finetune_epochs},
              {"finetune_learning_rate", c.quant.finetune_learning_rate},
              {"finetune_batch_size", c.quant.finetune_batch_size}}},
            {"replay",
             {{"mode", engine::to_string(c.replay.mode)},
              {"queue_depth", c.replay.queue_depth},
              {"time_scale", c.replay.time_scale}}},
            {"threshold", c.threshold}};
}

namespace {

void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
    const std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json(const Json& j) {
    RunConfig c;
    try {
        check_keys(j, "",
                   {"seed", "output_dir", "synthetic", "window", "split", "model", "train", "quant", "replay", "threshold"});
        read(j, "seed", c.seed);
        read(j, "output_dir", c.output_dir);
        read(j, "threshold", c.threshold);
        if (j.contains("synthetic")) {
            const auto& s = j.at("synthetic");
            check_keys(s, "synthetic", {"attack", "frames", "attack_rate", "attack_fraction", "burst_period", "profile_seed"});
            if (s.contains("attack")) c.synthetic.attack = parse_attack_kind(s.at("attack").get<std::string>());
            read(s, "frames", c.synthetic.frames);
            if (s.contains("attack_rate") && !s.at("attack_rate").is_null()) c.synthetic.attack_rate = s.at("attack_rate").get<double>();
            if (s.contains("attack_fraction") && !s.at("attack_fraction").is_null()) {
                c.synthetic.attack_fraction = s.at("attack_fraction").get<double>();
            }
            read(s, "burst_period", c.synthetic.burst_period);
            read(s, "profile_seed", c.synthetic.profile_seed);
        }
        if (j.contains("window")) {
            const auto& w = j.at("window");
            check_keys(w, "window", {"depth", "bytes_per_message"});
            read(w, "depth", c.window.depth);
            if (w.contains("bytes_per_message") && w.at("bytes_per_message").get<std::size_t>() != WindowConfig::kBytesPerMessage) {
                throw ConfigError("window.bytes_per_message is fixed at 10");
            }
        }
        if (j.contains("split")) {
            const auto& s = j.at("split");
            check_keys(s, "split", {"train", "validation", "test", "order"});
            read(s, "train", c.split.train);
            read(s, "validation", c.split.validation);
            read(s, "test", c.split.test);
            if (s.contains("order") && s.at("order").get<std::string>() != "chronological") {
                throw ConfigError("split.order supports only 'chronological'");
            }
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            check_keys(m, "model",
                       {"layer_units", "hidden_activation", "output_activation", "dropout_rate", "batchnorm", "bn_epsilon",
                        "bn_momentum"});
            c.model = io::spec_from_json(m);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            check_keys(t, "train",
                       {"learning_rate", "epochs", "batch_size", "beta1", "beta2", "adam_epsilon", "checkpoint_every_epoch",
                        "early_stop", "rehearsal"});
            read(t, "learning_rate", c.train.learning_rate);
            read(t, "epochs", c.train.epochs);
            read(t, "batch_size", c.train.batch_size);
            read(t, "beta1", c.train.beta1);
            read(t, "beta2", c.train.beta2);
            read(t, "adam_epsilon", c.train.adam_epsilon);
            read(t, "checkpoint_every_epoch", c.train.checkpoint_every_epoch);
            read(t, "rehearsal", c.rehearsal);
            if (t.contains("early_stop")) {
                const auto& e = t.at("early_stop");
                check_keys(e, "train.early_stop", {"enabled", "max_drop", "patience"});
                read(e, "enabled", c.train.early_stop.enabled);
                read(e, "max_drop", c.train.early_stop.max_drop);
                read(e, "patience", c.train.early_stop.patience);
            }
        }
        if (j.contains("quant")) {
            const auto& q = j.at("quant");
            check_keys(q, "quant", {"calibration_size", "finetune_epochs", "finetune_learning_rate", "finetune_batch_size"});
            read(q, "calibration_size", c.quant.calibration_size);
            read(q, "finetune_epochs", c.quant.finetune_epochs);
            read(q, "finetune_learning_rate", c.quant.finetune_learning_rate);
            read(q, "finetune_batch_size", c.quant.finetune_batch_size);
        }
        if (j.contains("replay")) {
            const auto& r = j.at("replay");
            check_keys(r, "replay", {"mode", "queue_depth", "time_scale"});
            if (r.contains("mode")) c.replay.mode = engine::parse_replay_mode(r.at("mode").get<std::string>());
            read(r, "queue_depth", c.replay.queue_depth);
            read(r, "time_scale", c.replay.time_scale);
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.train.seed = c.seed;
    c.validate();
    return c;
}

void apply_override(Json& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
    }
    const std::string path(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    Json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("override '" + path + "' has an empty key");
        if (!node->is_object()) *node = Json::object();
        if (dot == std::string::npos) {
            (*node)[key] = std::move(value);
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

RunConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
    Json doc = Json::object();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("cannot open config file " + path->string());
        doc = Json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw ConfigError("config file " + path->string() + " is not valid JSON");
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return config_from_json(doc);
}

SyntheticConfig synthetic_config(const RunConfig& c) {
    SyntheticConfig s = default_synthetic_config(c.synthetic.attack, c.seed);
    s.normal_ids = default_vehicle_profile(c.synthetic.profile_seed);
    if (c.synthetic.attack_rate) s.attack_rate = *c.synthetic.attack_rate;
    if (c.synthetic.attack_fraction) s.attack_fraction_target = *c.synthetic.attack_fraction;
    s.burst_period = c.synthetic.burst_period;
    s.duration = duration_for_frame_count(s, c.synthetic.frames);
    return s;
}

}  // namespace canids::cli
