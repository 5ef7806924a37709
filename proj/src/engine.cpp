#include "canids/engine.hpp"

namespace canids::engine {

void DetectorPair::validate(int width) const {
    if (!detector_1 || !detector_2) throw ConfigError("both detectors must be loaded");
    if (detector_1->input_width() != width || detector_2->input_width() != width) {
        throw ConfigError("detector input width does not match the window width " + std::to_string(width));
    }
}

Pipeline::Pipeline(DetectorPair pair, PipelineOptions options)
    : pair_(std::move(pair)),
      options_(std::move(options)),
      queue_1_(options_.queue_depth),
      queue_2_(options_.queue_depth) {
    if (!pair_.detector_1 || !pair_.detector_2) throw ConfigError("both detectors must be loaded");
    worker_1_ = std::thread([this] { detector_loop(1); });
    worker_2_ = std::thread([this] { detector_loop(2); });
}

Pipeline::~Pipeline() {
    shutdown();
    if (worker_1_.joinable()) worker_1_.join();
    if (worker_2_.joinable()) worker_2_.join();
}

Ticket Pipeline::submit(WindowFeature feature, Clock::time_point ingested) {
    std::lock_guard submit_lock(submit_mu_);
    Job job;
    {
        std::lock_guard lock(mu_);
        if (closed_) throw PipelineClosed("submit after shutdown");
        job.ticket = next_ticket_++;
        Pending& p = pending_[job.ticket];
        p.ingested = ingested;
        p.timestamp = feature.newest_timestamp;
        p.label = feature.label;
    }
    job.feature = std::make_shared<const WindowFeature>(std::move(feature));
    job.ingested = ingested;
    queue_1_.push(job);
    queue_2_.push(job);
    return job.ticket;
}

void Pipeline::detector_loop(int which) {
    auto& queue = which == 1 ? queue_1_ : queue_2_;
    const quant::QuantModel& model = which == 1 ? *pair_.detector_1 : *pair_.detector_2;
    while (auto job = queue.pop()) {
        if (options_.before_inference) options_.before_inference(which, job->ticket);
        const double score = quant::qforward(model, job->feature->values);
        record(which, *job, score);
    }
}

void Pipeline::record(int which, const Job& job, double score) {
    const auto now = Clock::now();
    std::lock_guard lock(mu_);
    Pending& p = pending_.at(job.ticket);
    (which == 1 ? p.score_1 : p.score_2) = score;
    if (p.score_1 && p.score_2) {
        p.latency = std::chrono::duration<double>(now - p.ingested).count();
        if (job.ticket == next_delivery_) ready_cv_.notify_all();
    }
}

bool Pipeline::ready_locked() const {
    const auto it = pending_.find(next_delivery_);
    return it != pending_.end() && it->second.score_1 && it->second.score_2;
}

Verdict Pipeline::take_locked() {
    const auto it = pending_.find(next_delivery_);
    const Pending& p = it->second;
    Verdict v;
    v.message_index = next_delivery_;
    v.timestamp = p.timestamp;
    v.score_1 = *p.score_1;
    v.score_2 = *p.score_2;
    v.attack_1 = v.score_1 >= options_.threshold;
    v.attack_2 = v.score_2 >= options_.threshold;
    v.latency = p.latency;
    v.label = p.label;
    pending_.erase(it);
    ++next_delivery_;
    return v;
}

std::optional<Verdict> Pipeline::collect() {
    std::unique_lock lock(mu_);
    ready_cv_.wait(lock, [&] { return ready_locked() || (closed_ && next_delivery_ == next_ticket_); });
    if (!ready_locked()) return std::nullopt;
    return take_locked();
}

std::optional<Verdict> Pipeline::try_collect() {
    std::lock_guard lock(mu_);
    if (!ready_locked()) return std::nullopt;
    return take_locked();
}

void Pipeline::shutdown() {
    std::lock_guard submit_lock(submit_mu_);
    {
        std::lock_guard lock(mu_);
        if (closed_) return;
        closed_ = true;
        ready_cv_.notify_all();
    }
    queue_1_.close();
    queue_2_.close();
}

Ticket Pipeline::submitted() const {
    std::lock_guard lock(mu_);
    return next_ticket_;
}

}  // namespace canids::engine
