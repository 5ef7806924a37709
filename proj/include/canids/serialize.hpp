#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "canids/nn.hpp"

namespace canids::quant {
struct QuantModel;
struct Scales;
}

namespace canids::io {

using Json = nlohmann::json;

inline constexpr const char* kCheckpointFormat = "canids.mlp";
inline constexpr const char* kQuantFormat = "canids.qmodel";
inline constexpr int kFormatVersion = 1;

Json spec_to_json(const nn::ModelSpec& spec);
nn::ModelSpec spec_from_json(const Json& j);

Json model_to_json(const nn::MlpModel& model, const Json& metadata = Json::object());
nn::MlpModel model_from_json(const Json& j, Json* metadata = nullptr);

Json quant_to_json(const quant::QuantModel& model, const Json& metadata = Json::object());
quant::QuantModel quant_from_json(const Json& j, Json* metadata = nullptr);

void save_checkpoint(const std::filesystem::path& path, const nn::MlpModel& model,
                     const Json& metadata = Json::object());
nn::MlpModel load_checkpoint(const std::filesystem::path& path, Json* metadata = nullptr);

void save_quant_model(const std::filesystem::path& path, const quant::QuantModel& model,
                      const Json& metadata = Json::object());
quant::QuantModel load_quant_model(const std::filesystem::path& path, Json* metadata = nullptr);

/// SHA-256 over the spec and every tensor's bytes.
std::string model_hash(const nn::MlpModel& model);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace canids::io
