#include "canids/serialize.hpp"

#include <fstream>

#include "canids/checksum.hpp"
#include "canids/quant.hpp"

namespace canids::io {

namespace {

template <typename Derived>
Json tensor_to_json(const Eigen::MatrixBase<Derived>& t, bool is_matrix) {
    Json shape = is_matrix ? Json::array({t.rows(), t.cols()}) : Json::array({t.size()});
    Json data = Json::array();
    // Row-major order regardless of storage.
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
        for (Eigen::Index c = 0; c < t.cols(); ++c) data.push_back(static_cast<double>(t(r, c)));
    }
    return {{"dtype", "float32"}, {"shape", std::move(shape)}, {"data", std::move(data)}};
}

const Json& field(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw DataError(std::string("model file lacks field '") + key + "'");
    return j.at(key);
}

void expect_dtype(const Json& t, const char* dtype) {
    if (field(t, "dtype").get<std::string>() != dtype) {
        throw DataError(std::string("tensor dtype must be ") + dtype);
    }
}

nn::Matrix<float> matrix_from_json(const Json& t) {
    expect_dtype(t, "float32");
    const auto shape = field(t, "shape").get<std::vector<Eigen::Index>>();
    const auto& data = field(t, "data");
    if (shape.size() != 2 || static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1]) {
        throw DataError("matrix tensor shape does not match its data");
    }
    nn::Matrix<float> m(shape[0], shape[1]);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(data[static_cast<std::size_t>(i)].get<double>());
    return m;
}

nn::Vector<float> vector_from_json(const Json& t) {
    expect_dtype(t, "float32");
    const auto shape = field(t, "shape").get<std::vector<Eigen::Index>>();
    const auto& data = field(t, "data");
    if (shape.size() != 1 || static_cast<Eigen::Index>(data.size()) != shape[0]) {
        throw DataError("vector tensor shape does not match its data");
    }
    nn::Vector<float> v(shape[0]);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = static_cast<float>(data[static_cast<std::size_t>(i)].get<double>());
    return v;
}

void check_format(const Json& j, const char* format) {
    if (!j.is_object() || j.value("format", std::string{}) != format) {
        throw DataError(std::string("not a ") + format + " file");
    }
    if (j.value("version", 0) != kFormatVersion) throw DataError("unsupported format version");
}

}  // namespace

Json spec_to_json(const nn::ModelSpec& spec) {
    return {{"layer_units", spec.layer_units},
            {"hidden_activation", "relu"},
            {"output_activation", "sigmoid"},
            {"dropout_rate", spec.dropout_rate},
            {"batchnorm", spec.batchnorm},
            {"bn_epsilon", spec.bn_epsilon},
            {"bn_momentum", spec.bn_momentum}};
}

nn::ModelSpec spec_from_json(const Json& j) {
    nn::ModelSpec spec;
    spec.layer_units = j.value("layer_units", spec.layer_units);
    spec.dropout_rate = j.value("dropout_rate", spec.dropout_rate);
    spec.batchnorm = j.value("batchnorm", spec.batchnorm);
    spec.bn_epsilon = j.value("bn_epsilon", spec.bn_epsilon);
    spec.bn_momentum = j.value("bn_momentum", spec.bn_momentum);
    if (j.value("hidden_activation", std::string("relu")) != "relu" ||
        j.value("output_activation", std::string("sigmoid")) != "sigmoid") {
        throw ConfigError("only relu hidden and sigmoid output activations are supported");
    }
    spec.validate();
    return spec;
}

Json model_to_json(const nn::MlpModel& model, const Json& metadata) {
    Json dense = Json::array();
    for (const auto& d : model.dense) {
        dense.push_back({{"weight", tensor_to_json(d.weight, true)}, {"bias", tensor_to_json(d.bias, false)}});
    }
    Json norms = Json::array();
    for (const auto& bn : model.norms) {
        norms.push_back({{"gamma", tensor_to_json(bn.gamma, false)},
                         {"beta", tensor_to_json(bn.beta, false)},
                         {"running_mean", tensor_to_json(bn.running_mean, false)},
                         {"running_var", tensor_to_json(bn.running_var, false)}});
    }
    return {{"format", kCheckpointFormat},
            {"version", kFormatVersion},
            {"spec", spec_to_json(model.spec)},
            {"dense", std::move(dense)},
            {"batchnorm", std::move(norms)},
            {"model_hash", model_hash(model)},
            {"metadata", metadata}};
}

nn::MlpModel model_from_json(const Json& j, Json* metadata) {
    check_format(j, kCheckpointFormat);
    nn::MlpModel model;
    model.spec = spec_from_json(field(j, "spec"));
    for (const auto& d : field(j, "dense")) {
        model.dense.push_back({matrix_from_json(field(d, "weight")), vector_from_json(field(d, "bias"))});
    }
    for (const auto& bn : field(j, "batchnorm")) {
        model.norms.push_back({vector_from_json(field(bn, "gamma")), vector_from_json(field(bn, "beta")),
                               vector_from_json(field(bn, "running_mean")),
                               vector_from_json(field(bn, "running_var"))});
    }
    try {
        model.validate();
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint is inconsistent: ") + e.what());
    }
    if (metadata) *metadata = j.value("metadata", Json::object());
    return model;
}

Json quant_to_json(const quant::QuantModel& model, const Json& metadata) {
    Json layers = Json::array();
    for (const auto& l : model.layers) {
        layers.push_back({{"in", l.in},
                          {"out", l.out},
                          {"input_fraction_bits", l.scales.input.fraction_bits},
                          {"weight_fraction_bits", l.scales.weight.fraction_bits},
                          {"output_fraction_bits", l.scales.output.fraction_bits},
                          {"weight", {{"dtype", "int8"}, {"shape", {l.out, l.in}}, {"data", l.weight}}},
                          {"bias", {{"dtype", "int32"}, {"shape", {l.out}}, {"data", l.bias}}}});
    }
    return {{"format", kQuantFormat},
            {"version", kFormatVersion},
            {"arithmetic", "pow2-symmetric-int8, int32 accumulate, round-half-even"},
            {"output", "dequantize-then-sigmoid"},
            {"source_hash", model.source_hash},
            {"layers", std::move(layers)},
            {"metadata", metadata}};
}

quant::QuantModel quant_from_json(const Json& j, Json* metadata) {
    check_format(j, kQuantFormat);
    quant::QuantModel model;
    model.source_hash = j.value("source_hash", std::string{});
    for (const auto& l : field(j, "layers")) {
        quant::QuantLayer layer;
        layer.in = field(l, "in").get<int>();
        layer.out = field(l, "out").get<int>();
        layer.scales.input.fraction_bits = field(l, "input_fraction_bits").get<int>();
        layer.scales.weight.fraction_bits = field(l, "weight_fraction_bits").get<int>();
        layer.scales.output.fraction_bits = field(l, "output_fraction_bits").get<int>();
        const auto& w = field(l, "weight");
        const auto& b = field(l, "bias");
        expect_dtype(w, "int8");
        expect_dtype(b, "int32");
        for (const auto& v : field(w, "data")) {
            const int x = v.get<int>();
            if (x < quant::kQMin || x > quant::kQMax) throw DataError("int8 weight out of range");
            layer.weight.push_back(static_cast<std::int8_t>(x));
        }
        layer.bias = field(b, "data").get<std::vector<std::int32_t>>();
        model.layers.push_back(std::move(layer));
    }
    try {
        model.validate();
    } catch (const ConfigError& e) {
        throw DataError(std::string("quantized model is inconsistent: ") + e.what());
    }
    if (metadata) *metadata = j.value("metadata", Json::object());
    return model;
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(1) << '\n';
    if (!out) throw DataError("write failed for " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const nn::MlpModel& model, const Json& metadata) {
    write_json_file(path, model_to_json(model, metadata));
}

nn::MlpModel load_checkpoint(const std::filesystem::path& path, Json* metadata) {
    return model_from_json(read_json_file(path), metadata);
}

void save_quant_model(const std::filesystem::path& path, const quant::QuantModel& model, const Json& metadata) {
    write_json_file(path, quant_to_json(model, metadata));
}

quant::QuantModel load_quant_model(const std::filesystem::path& path, Json* metadata) {
    return quant_from_json(read_json_file(path), metadata);
}

std::string model_hash(const nn::MlpModel& model) {
    std::string bytes = spec_to_json(model.spec).dump();
    auto append = [&](const float* p, Eigen::Index n) {
        bytes.append(reinterpret_cast<const char*>(p), static_cast<std::size_t>(n) * sizeof(float));
    };
    for (const auto& d : model.dense) {
        append(d.weight.data(), d.weight.size());
        append(d.bias.data(), d.bias.size());
    }
    for (const auto& bn : model.norms) {
        append(bn.gamma.data(), bn.gamma.size());
        append(bn.beta.data(), bn.beta.size());
        append(bn.running_mean.data(), bn.running_mean.size());
        append(bn.running_var.data(), bn.running_var.size());
    }
    return sha256_hex(bytes);
}

}  // namespace canids::io
