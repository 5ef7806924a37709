#include <doctest.h>

#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "canids/engine.hpp"

using namespace canids;
using namespace canids::engine;

namespace {

std::vector<LabeledFrame> log_of(AttackKind kind, std::uint64_t seed, std::size_t frames) {
    auto cfg = default_synthetic_config(kind, seed);
    cfg.duration = duration_for_frame_count(cfg, frames);
    return generate_synthetic_log(cfg);
}

std::shared_ptr<const quant::QuantModel> small_detector(std::uint64_t seed, const std::vector<LabeledFrame>& log) {
    nn::ModelSpec spec;
    spec.layer_units = {40, 24, 12, 1};
    spec.batchnorm = false;
    spec.dropout_rate = 0.0;
    auto m = nn::init_model(spec, seed);
    for (auto& d : m.dense) d.weight *= 0.1f;
    const auto windows = windows_of(log);
    return std::make_shared<const quant::QuantModel>(
        quant::quantize(m, quant::calibrate(m, quant::make_calibration_set(windows))));
}

DetectorPair pair_for(const std::vector<LabeledFrame>& log) {
    return {small_detector(1, log), small_detector(2, log)};
}

}  // namespace

TEST_CASE("tickets start at zero and increase") {
    const auto log = log_of(AttackKind::DoS, 1, 1100);
    const auto windows = windows_of(log);
    Pipeline p(pair_for(log));
    for (std::size_t i = 0; i < 1000; ++i) CHECK(p.submit(windows[i]) == i);
    CHECK(p.submitted() == 1000);
    p.shutdown();
    CHECK_THROWS_AS(p.submit(windows[0]), PipelineClosed);
    std::size_t n = 0;
    while (auto v = p.collect()) {
        CHECK(v->message_index == n);
        ++n;
    }
    CHECK(n == 1000);
}

TEST_CASE("order and scores hold under detector delays") {
    const auto log = log_of(AttackKind::Fuzzy, 4, 2000);
    const auto windows = windows_of(log);
    const auto pair = pair_for(log);
    PipelineOptions opts;
    opts.queue_depth = 8;
    auto gen = std::make_shared<std::mt19937_64>(9);
    auto mu = std::make_shared<std::mutex>();
    opts.before_inference = [gen, mu](int detector, Ticket) {
        int us;
        {
            std::lock_guard lock(*mu);
            us = static_cast<int>((*gen)() % (detector == 2 ? 200 : 50));
        }
        std::this_thread::sleep_for(std::chrono::microseconds(us));
    };
    Pipeline p(pair, opts);
    std::vector<Verdict> got;
    std::thread consumer([&] {
        while (auto v = p.collect()) got.push_back(*v);
    });
    for (const auto& w : windows) p.submit(w);
    p.shutdown();
    consumer.join();
    REQUIRE(got.size() == windows.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].message_index == i);
        CHECK(got[i].score_1 == quant::qforward(*pair.detector_1, windows[i].values));
        CHECK(got[i].score_2 == quant::qforward(*pair.detector_2, windows[i].values));
        CHECK(got[i].attack_1 == (got[i].score_1 >= 0.5));
        CHECK(got[i].timestamp == windows[i].newest_timestamp);
        CHECK(got[i].label == windows[i].label);
        CHECK(got[i].latency >= 0.0);
    }
}

TEST_CASE("try_collect does not block") {
    const auto log = log_of(AttackKind::DoS, 2, 200);
    Pipeline p(pair_for(log));
    CHECK_FALSE(p.try_collect().has_value());
    p.shutdown();
    CHECK_FALSE(p.collect().has_value());
}

TEST_CASE("detector pair validation") {
    const auto log = log_of(AttackKind::DoS, 3, 200);
    auto pair = pair_for(log);
    CHECK_NOTHROW(pair.validate(40));
    CHECK_THROWS_AS(pair.validate(30), ConfigError);
    pair.detector_2.reset();
    CHECK_THROWS_AS(pair.validate(40), ConfigError);
    CHECK_THROWS_AS(Pipeline{pair}, ConfigError);
}

TEST_CASE("replay counts and warm-up") {
    const auto log = log_of(AttackKind::SpoofGear, 5, 500);
    const auto pair = pair_for(log);
    const auto three = std::span(log).first(3);
    const auto r3 = replay(three, pair);
    CHECK(r3.verdict_count == 0);
    CHECK(r3.warmup_skipped == 3);
    CHECK(r3.total_messages == 3);
    CHECK_THROWS_AS(replay(std::span<const LabeledFrame>{}, pair), DataError);

    const auto r = replay(log, pair);
    CHECK(r.total_messages == log.size());
    CHECK(r.warmup_skipped == 3);
    CHECK(r.verdict_count + r.warmup_skipped == r.total_messages);
    CHECK(r.verdicts.size() == r.verdict_count);
}

TEST_CASE("10k replay is ordered, deterministic and complete") {
    const auto log = log_of(AttackKind::Fuzzy, 6, 10'003);
    const auto pair = pair_for(log);
    const auto windows = windows_of(log);
    ReplayOptions opts;
    opts.pipeline.before_inference = [](int detector, Ticket t) {
        if ((t * 2654435761u + static_cast<Ticket>(detector)) % 97 == 0) std::this_thread::sleep_for(std::chrono::microseconds(300));
    };
    const auto a = replay(log, pair, opts);
    const auto b = replay(log, pair);
    REQUIRE(a.verdict_count == windows.size());
    REQUIRE(b.verdict_count == windows.size());
    std::set<Ticket> seen;
    for (std::size_t i = 0; i < a.verdicts.size(); ++i) {
        CHECK(a.verdicts[i].message_index == i);
        seen.insert(a.verdicts[i].message_index);
        CHECK(a.verdicts[i].score_1 == b.verdicts[i].score_1);
        CHECK(a.verdicts[i].score_2 == b.verdicts[i].score_2);
        CHECK(a.verdicts[i].score_1 == quant::qforward(*pair.detector_1, windows[i].values));
    }
    CHECK(seen.size() == windows.size());
    CHECK(a.throughput > 0.0);
    CHECK(a.wall_seconds > 0.0);
    CHECK(a.latency.min <= a.latency.mean);
    CHECK(a.latency.mean <= a.latency.max);
    CHECK(a.latency.p50 <= a.latency.p99);
    CHECK(a.line_rate_kbps == doctest::Approx(a.throughput * kMaxFrameBits / 1000.0));
}

TEST_CASE("timestamped replay matches max rate") {
    const auto log = log_of(AttackKind::SpoofRpm, 7, 400);
    const auto pair = pair_for(log);
    ReplayOptions ts;
    ts.mode = ReplayMode::Timestamped;
    ts.time_scale = 0.01;
    const auto a = replay(log, pair, ts);
    const auto b = replay(log, pair);
    REQUIRE(a.verdicts.size() == b.verdicts.size());
    for (std::size_t i = 0; i < a.verdicts.size(); ++i) {
        CHECK(a.verdicts[i].score_1 == b.verdicts[i].score_1);
        CHECK(a.verdicts[i].score_2 == b.verdicts[i].score_2);
    }
    CHECK(a.mode == ReplayMode::Timestamped);
}

TEST_CASE("latency summary uses nearest rank") {
    std::vector<double> xs;
    for (int i = 1; i <= 100; ++i) xs.push_back(i * 1e-3);
    const auto s = summarize_latency(xs);
    CHECK(s.min == 1e-3);
    CHECK(s.max == doctest::Approx(0.1));
    CHECK(s.mean == doctest::Approx(0.0505));
    CHECK(s.p50 == doctest::Approx(0.05));
    CHECK(s.p99 == doctest::Approx(0.099));
    const auto one = summarize_latency(std::vector<double>{0.5});
    CHECK(one.p50 == 0.5);
    CHECK(one.p99 == 0.5);
    const auto none = summarize_latency(std::vector<double>{});
    CHECK(none.max == 0.0);
}

TEST_CASE("replay mode names") {
    CHECK(parse_replay_mode("max-rate") == ReplayMode::MaxRate);
    CHECK(parse_replay_mode("timestamped") == ReplayMode::Timestamped);
    CHECK(to_string(ReplayMode::MaxRate) == "max_rate");
    CHECK_THROWS_AS(parse_replay_mode("warp"), ConfigError);
}

TEST_CASE("verdict CSV") {
    Verdict v;
    v.message_index = 3;
    v.timestamp = 1.5;
    v.score_1 = 0.25;
    v.score_2 = 0.75;
    v.attack_2 = true;
    v.latency = 2.5e-6;
    std::ostringstream out;
    write_verdicts_csv(out, std::vector<Verdict>{v});
    std::istringstream in(out.str());
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "message_index,timestamp,score_1,score_2,flags,latency_us");
    CHECK(row.rfind("3,1.500000,0.25,0.75,2,", 0) == 0);
}
