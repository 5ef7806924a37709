#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "canids/checksum.hpp"
#include "canids/quant.hpp"
#include "canids/serialize.hpp"

using namespace canids;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "canids_serialize_test";
    std::filesystem::create_directories(dir);
    return dir;
}

nn::MlpModel trained_like(std::uint64_t seed) {
    auto m = nn::init_model(nn::ModelSpec{}, seed);
    for (auto& n : m.norms) {
        n.gamma.setConstant(1.25f);
        n.beta.setConstant(-0.1f);
        n.running_mean.setConstant(3.0f);
        n.running_var.setConstant(0.7f);
    }
    for (auto& d : m.dense) d.bias.setConstant(0.01f * static_cast<float>(seed));
    return m;
}

bool same_model(const nn::MlpModel& a, const nn::MlpModel& b) {
    if (!(a.spec == b.spec) || a.dense.size() != b.dense.size() || a.norms.size() != b.norms.size()) return false;
    for (std::size_t i = 0; i < a.dense.size(); ++i) {
        if (a.dense[i].weight != b.dense[i].weight || a.dense[i].bias != b.dense[i].bias) return false;
    }
    for (std::size_t i = 0; i < a.norms.size(); ++i) {
        if (a.norms[i].gamma != b.norms[i].gamma || a.norms[i].beta != b.norms[i].beta ||
            a.norms[i].running_mean != b.norms[i].running_mean || a.norms[i].running_var != b.norms[i].running_var) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex(std::string_view{}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const auto path = temp_dir() / "abc.txt";
    {
        std::ofstream out(path, std::ios::binary);
        out << "abc";
    }
    CHECK(sha256_file(path) == sha256_hex("abc"));
}

TEST_CASE("checkpoint round trip is exact") {
    const auto m = trained_like(3);
    const auto path = temp_dir() / "m.ckpt.json";
    io::save_checkpoint(path, m, {{"epoch", 7}});
    io::Json meta;
    const auto back = io::load_checkpoint(path, &meta);
    CHECK(same_model(m, back));
    CHECK(meta["epoch"] == 7);
    CHECK(io::model_hash(back) == io::model_hash(m));

    auto folded = nn::fold_batchnorm(m);
    CHECK(same_model(io::model_from_json(io::model_to_json(folded)), folded));
}

TEST_CASE("model hash tracks content") {
    const auto a = trained_like(1);
    auto b = a;
    CHECK(io::model_hash(a) == io::model_hash(b));
    CHECK(io::model_hash(a).size() == 64);
    b.dense[2].weight(0, 0) += 1e-6f;
    CHECK(io::model_hash(a) != io::model_hash(b));
    CHECK(io::model_hash(a) != io::model_hash(trained_like(2)));
}

TEST_CASE("quantized model round trip") {
    nn::ModelSpec spec;
    spec.layer_units = {40, 8, 1};
    spec.batchnorm = false;
    auto m = nn::init_model(spec, 4);
    auto cfg = default_synthetic_config(AttackKind::DoS, 4);
    cfg.duration = 0.2;
    const auto windows = windows_of(generate_synthetic_log(cfg));
    const auto q = quant::quantize(m, quant::calibrate(m, quant::make_calibration_set(windows)));
    const auto path = temp_dir() / "q.json";
    io::save_quant_model(path, q, {{"note", "x"}});
    io::Json meta;
    CHECK(io::load_quant_model(path, &meta) == q);
    CHECK(meta["note"] == "x");
}

TEST_CASE("malformed files are rejected") {
    auto j = io::model_to_json(trained_like(1));
    auto bad = j;
    bad["format"] = "something.else";
    CHECK_THROWS_AS(io::model_from_json(bad), DataError);
    bad = j;
    bad["version"] = 99;
    CHECK_THROWS_AS(io::model_from_json(bad), DataError);
    CHECK_THROWS_AS(io::model_from_json(io::Json::object()), DataError);
    CHECK_THROWS_AS(io::quant_from_json(j), DataError);

    const auto path = temp_dir() / "broken.json";
    {
        std::ofstream out(path);
        out << "{ not json";
    }
    CHECK_THROWS_AS(io::load_checkpoint(path), DataError);
    CHECK_THROWS_AS(io::load_checkpoint(temp_dir() / "missing.json"), DataError);
}

TEST_CASE("spec round trip") {
    nn::ModelSpec spec;
    spec.layer_units = {40, 10, 1};
    spec.dropout_rate = 0.3;
    spec.batchnorm = false;
    CHECK(io::spec_from_json(io::spec_to_json(spec)) == spec);
}
