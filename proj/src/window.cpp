#include "canids/window.hpp"

#include <algorithm>

namespace canids {

FrameWindow::FrameWindow(WindowConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    ring_.assign(cfg_.width(), 0);
}

std::optional<WindowFeature> FrameWindow::push(const LabeledFrame& frame) {
    constexpr std::size_t kBytes = WindowConfig::kBytesPerMessage;
    const auto encoded = encode_frame_bytes(frame);

    // Slot to overwrite: next free slot while filling, the oldest afterwards.
    const std::size_t slot = count_ < cfg_.depth ? (head_ + count_) % cfg_.depth : head_;
    std::transform(encoded.begin(), encoded.end(), ring_.begin() + static_cast<std::ptrdiff_t>(slot * kBytes),
                   to_signed_feature);
    if (count_ < cfg_.depth) {
        ++count_;
    } else {
        head_ = (head_ + 1) % cfg_.depth;
    }
    if (count_ < cfg_.depth) return std::nullopt;

    WindowFeature feature;
    feature.values.resize(cfg_.width());
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
        const std::size_t src = ((head_ + i) % cfg_.depth) * kBytes;
        std::copy_n(ring_.begin() + static_cast<std::ptrdiff_t>(src), kBytes,
                    feature.values.begin() + static_cast<std::ptrdiff_t>(i * kBytes));
    }
    feature.label = frame.label;
    feature.newest_timestamp = frame.timestamp;
    return feature;
}

void FrameWindow::reset() {
    head_ = 0;
    count_ = 0;
}

std::vector<WindowFeature> windows_of(std::span<const LabeledFrame> log, const WindowConfig& cfg) {
    cfg.validate();
    std::vector<WindowFeature> out;
    if (log.size() >= cfg.depth) out.reserve(log.size() - cfg.depth + 1);
    FrameWindow window(cfg);
    for (const auto& frame : log) {
        if (auto feature = window.push(frame)) out.push_back(std::move(*feature));
    }
    return out;
}

}  // namespace canids
