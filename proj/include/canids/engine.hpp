#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include <json.hpp>

#include "canids/canlog.hpp"
#include "canids/quant.hpp"
#include "canids/window.hpp"

namespace canids::engine {

using Clock = std::chrono::steady_clock;
using Ticket = std::uint64_t;

class PipelineClosed : public Error {
public:
    using Error::Error;
};

/// Blocking FIFO with a fixed capacity. push() waits while full; pop() waits
/// while empty and returns nullopt once closed and drained.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

    bool push(T item) {
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
        if (closed_) return false;
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    std::optional<T> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
        if (items_.empty()) return std::nullopt;
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_full_.notify_all();
        not_empty_.notify_all();
    }

private:
    std::size_t capacity_;
    std::mutex mu_;
    std::condition_variable not_full_;
    std::condition_variable not_empty_;
    std::deque<T> items_;
    bool closed_ = false;
};

/// Detector 1 covers DoS and fuzzing, detector 2 the spoofing attacks.
struct DetectorPair {
    std::shared_ptr<const quant::QuantModel> detector_1;
    std::shared_ptr<const quant::QuantModel> detector_2;

    /// Throws ConfigError unless both models exist and accept `width` inputs.
    void validate(int width) const;
};

struct Verdict {
    Ticket message_index = 0;  // submission ordinal
    double timestamp = 0.0;    // newest frame of the window
    double score_1 = 0.0;
    double score_2 = 0.0;
    bool attack_1 = false;
    bool attack_2 = false;
    double latency = 0.0;  // seconds, ingestion to both scores ready
    Label label = Label::Normal;

    bool attack() const { return attack_1 || attack_2; }
};

struct PipelineOptions {
    std::size_t queue_depth = 64;
    double threshold = 0.5;
    /// Test hook run on the detector thread before each inference
    /// (detector is 1 or 2).
    std::function<void(int detector, Ticket ticket)> before_inference;
};

/// Two detector threads evaluate every submitted feature concurrently; a
/// reorder buffer releases verdicts strictly in submission order.
class Pipeline {
public:
    explicit Pipeline(DetectorPair pair, PipelineOptions options = {});
    ~Pipeline();

    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    /// Hands the feature to both detectors. Blocks only while a detector queue
    /// is full. Throws PipelineClosed after shutdown().
    Ticket submit(WindowFeature feature, Clock::time_point ingested = Clock::now());

    /// Next verdict in submission order; waits for it. Returns nullopt once
    /// the pipeline is shut down and every verdict was delivered.
    std::optional<Verdict> collect();

    /// Non-blocking variant of collect().
    std::optional<Verdict> try_collect();

    /// Stops accepting submissions; queued work still completes.
    void shutdown();

    Ticket submitted() const;

private:
    struct Job {
        Ticket ticket;
        std::shared_ptr<const WindowFeature> feature;
        Clock::time_point ingested;
    };
    struct Pending {
        std::optional<double> score_1;
        std::optional<double> score_2;
        Clock::time_point ingested;
        double latency = 0.0;
        double timestamp = 0.0;
        Label label = Label::Normal;
    };

    void detector_loop(int which);
    void record(int which, const Job& job, double score);
    bool ready_locked() const;
    Verdict take_locked();

    DetectorPair pair_;
    PipelineOptions options_;
    BoundedQueue<Job> queue_1_;
    BoundedQueue<Job> queue_2_;

    std::mutex submit_mu_;  // serialises submit() against shutdown()
    mutable std::mutex mu_;
    std::condition_variable ready_cv_;
    std::map<Ticket, Pending> pending_;
    Ticket next_ticket_ = 0;
    Ticket next_delivery_ = 0;
    bool closed_ = false;

    std::thread worker_1_;
    std::thread worker_2_;
};

// ---------------------------------------------------------------------------
// Replay.

enum class ReplayMode { MaxRate, Timestamped };

std::string_view to_string(ReplayMode mode);
ReplayMode parse_replay_mode(std::string_view text);

/// Worst-case stuffed length of an 8-byte CAN 2.0A frame, bits.
inline constexpr int kMaxFrameBits = 135;

struct ReplayOptions {
    ReplayMode mode = ReplayMode::MaxRate;
    WindowConfig window;
    PipelineOptions pipeline;
    double time_scale = 1.0;  // Timestamped mode: wall seconds per log second
};

struct LatencyStats {
    double min = 0.0;
    double mean = 0.0;
    double p50 = 0.0;
    double p99 = 0.0;
    double max = 0.0;
};

/// Nearest-rank percentiles over latencies in seconds.
LatencyStats summarize_latency(std::span<const double> latencies);

struct ReplayReport {
    ReplayMode mode = ReplayMode::MaxRate;
    std::size_t total_messages = 0;
    std::size_t warmup_skipped = 0;
    std::size_t verdict_count = 0;
    double wall_seconds = 0.0;
    double throughput = 0.0;  // verdicts per second
    LatencyStats latency;
    int bits_per_frame = kMaxFrameBits;
    double line_rate_kbps = 0.0;  // throughput * bits_per_frame / 1000
    std::vector<Verdict> verdicts;
};

/// Drives window -> pipeline -> collection over the whole log. Throws
/// DataError on an empty log.
ReplayReport replay(std::span<const LabeledFrame> log, const DetectorPair& pair, const ReplayOptions& options = {});

/// message_index,timestamp,score_1,score_2,flags,latency_us (flags: bit 0
/// detector 1, bit 1 detector 2).
void write_verdicts_csv(std::ostream& out, std::span<const Verdict> verdicts);

/// Report summary; the verdict stream itself is exported as CSV.
nlohmann::json to_json(const ReplayReport& report);

}  // namespace canids::engine
