#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "canids/engine.hpp"

namespace canids::engine {

std::string_view to_string(ReplayMode mode) {
    return mode == ReplayMode::MaxRate ? "max_rate" : "timestamped";
}

ReplayMode parse_replay_mode(std::string_view text) {
    if (text == "max_rate" || text == "max-rate" || text == "maxrate") return ReplayMode::MaxRate;
    if (text == "timestamped") return ReplayMode::Timestamped;
    throw ConfigError("unknown replay mode '" + std::string(text) + "'");
}

LatencyStats summarize_latency(std::span<const double> latencies) {
    LatencyStats s;
    if (latencies.empty()) return s;
    std::vector<double> sorted(latencies.begin(), latencies.end());
    std::sort(sorted.begin(), sorted.end());
    auto rank = [&](double p) {
        const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
        return sorted[std::clamp<std::size_t>(k, 1, sorted.size()) - 1];
    };
    s.min = sorted.front();
    s.max = sorted.back();
    s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    s.mean = std::clamp(s.mean, s.min, s.max);  // guard summation rounding
    s.p50 = rank(0.50);
    s.p99 = rank(0.99);
    return s;
}

ReplayReport replay(std::span<const LabeledFrame> log, const DetectorPair& pair, const ReplayOptions& options) {
    if (log.empty()) throw DataError("cannot replay an empty log");
    options.window.validate();
    pair.validate(static_cast<int>(options.window.width()));
    if (!(options.time_scale > 0.0)) throw ConfigError("time_scale must be positive");

    ReplayReport report;
    report.mode = options.mode;
    report.total_messages = log.size();

    Pipeline pipeline(pair, options.pipeline);
    FrameWindow window(options.window);

    const std::size_t expected = log.size() >= options.window.depth ? log.size() - options.window.depth + 1 : 0;
    report.verdicts.reserve(expected);
    std::thread collector([&] {
        for (std::size_t i = 0; i < expected; ++i) {
            auto v = pipeline.collect();
            if (!v) break;
            report.verdicts.push_back(*v);
        }
    });

    const auto start = Clock::now();
    const double t0 = log.front().timestamp;
    try {
        for (const auto& frame : log) {
            if (options.mode == ReplayMode::Timestamped) {
                const auto offset = std::chrono::duration<double>((frame.timestamp - t0) * options.time_scale);
                std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(offset));
            }
            const auto ingested = Clock::now();
            if (auto feature = window.push(frame)) {
                pipeline.submit(std::move(*feature), ingested);
            } else {
                ++report.warmup_skipped;
            }
        }
    } catch (...) {
        pipeline.shutdown();
        collector.join();
        throw;
    }
    collector.join();
    const auto end = Clock::now();
    pipeline.shutdown();

    report.verdict_count = report.verdicts.size();
    report.wall_seconds = std::chrono::duration<double>(end - start).count();
    if (report.verdict_count > 0 && report.wall_seconds > 0.0) {
        report.throughput = static_cast<double>(report.verdict_count) / report.wall_seconds;
    }
    report.line_rate_kbps = report.throughput * report.bits_per_frame / 1000.0;
    std::vector<double> latencies;
    latencies.reserve(report.verdicts.size());
    for (const auto& v : report.verdicts) latencies.push_back(v.latency);
    report.latency = summarize_latency(latencies);
    return report;
}

void write_verdicts_csv(std::ostream& out, std::span<const Verdict> verdicts) {
    out << "message_index,timestamp,score_1,score_2,flags,latency_us\n";
    char buf[160];
    for (const auto& v : verdicts) {
        const int flags = (v.attack_1 ? 1 : 0) | (v.attack_2 ? 2 : 0);
        std::snprintf(buf, sizeof buf, "%llu,%.6f,%.17g,%.17g,%d,%.3f\n",
                      static_cast<unsigned long long>(v.message_index), v.timestamp, v.score_1, v.score_2, flags,
                      v.latency * 1e6);
        out << buf;
    }
}

nlohmann::json to_json(const ReplayReport& r) {
    return {{"mode", to_string(r.mode)},
            {"total_messages", r.total_messages},
            {"warmup_skipped", r.warmup_skipped},
            {"verdicts", r.verdict_count},
            {"wall_seconds", r.wall_seconds},
            {"throughput_msgs_per_s", r.throughput},
            {"latency_us",
             {{"min", r.latency.min * 1e6},
              {"mean", r.latency.mean * 1e6},
              {"p50", r.latency.p50 * 1e6},
              {"p99", r.latency.p99 * 1e6},
              {"max", r.latency.max * 1e6}}},
            {"bits_per_max_frame", r.bits_per_frame},
            {"line_rate_kbps", r.line_rate_kbps}};
}

}  // namespace canids::engine
