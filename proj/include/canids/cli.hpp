#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "canids/canlog.hpp"
#include "canids/engine.hpp"
#include "canids/nn.hpp"
#include "canids/train.hpp"
#include "canids/window.hpp"

namespace canids::cli {

struct SyntheticSection {
    AttackKind attack = AttackKind::DoS;
    std::size_t frames = 50'000;
    std::optional<double> attack_rate;      // default per attack kind
    std::optional<double> attack_fraction;  // default per attack kind
    double burst_period = 0.05;
    std::uint64_t profile_seed = 0x5EED;
};

struct QuantSection {
    std::size_t calibration_size = 1024;
    int finetune_epochs = 5;
    double finetune_learning_rate = 1e-5;
    int finetune_batch_size = 64;
};

struct ReplaySection {
    engine::ReplayMode mode = engine::ReplayMode::MaxRate;
    std::size_t queue_depth = 64;
    double time_scale = 1.0;
};

/// One document drives every stage. Checkpoint paths are derived from
/// output_dir, so TrainConfig::checkpoint_dir is not part of it.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "run";
    SyntheticSection synthetic;
    WindowConfig window;
    SplitRatios split;
    nn::ModelSpec model;
    nn::TrainConfig train = [] {
        nn::TrainConfig t;
        t.checkpoint_every_epoch = true;
        return t;
    }();
    /// Mix the first stage's training windows into a transfer run.
    bool rehearsal = true;
    QuantSection quant;
    ReplaySection replay;
    double threshold = 0.5;

    void validate() const;
};

/// Fully resolved document: every field, defaults included.
nlohmann::json to_json(const RunConfig& cfg);

/// Strict reader: unknown keys and wrong types raise ConfigError. Missing
/// keys keep their defaults.
RunConfig config_from_json(const nlohmann::json& j);

/// `a.b.c=value`; the value is read as JSON when it parses, else as a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Config file (optional) with overrides applied in order.
RunConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides);

SyntheticConfig synthetic_config(const RunConfig& cfg);

/// Entry point shared by the executable and the tests. Returns an ExitCode.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace canids::cli
