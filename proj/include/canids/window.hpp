#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "canids/canlog.hpp"

namespace canids {

struct WindowConfig {
    std::size_t depth = 4;
    static constexpr std::size_t kBytesPerMessage = kEncodedFrameBytes;

    std::size_t width() const { return depth * kBytesPerMessage; }
    void validate() const {
        if (depth < 1) throw ConfigError("window depth must be at least 1");
    }
};

/// Detector input: the encoded bytes of `depth` consecutive frames, oldest
/// first, each shifted by -128 into the signed range.
struct WindowFeature {
    std::vector<std::int8_t> values;
    Label label = Label::Normal;
    double newest_timestamp = 0.0;

    bool operator==(const WindowFeature&) const = default;
};

constexpr std::int8_t to_signed_feature(std::uint8_t raw) {
    return static_cast<std::int8_t>(static_cast<int>(raw) - 128);
}
constexpr std::uint8_t from_signed_feature(std::int8_t value) {
    return static_cast<std::uint8_t>(static_cast<int>(value) + 128);
}

/// FIFO of the most recent `depth` encoded frames. No feature is emitted until
/// the buffer is full.
class FrameWindow {
public:
    explicit FrameWindow(WindowConfig cfg = {});

    std::optional<WindowFeature> push(const LabeledFrame& frame);
    void reset();

    std::size_t buffered() const { return count_; }
    const WindowConfig& config() const { return cfg_; }

private:
    WindowConfig cfg_;
    std::vector<std::int8_t> ring_;  // depth slots of 10 signed bytes
    std::size_t head_ = 0;           // slot of the oldest frame once full
    std::size_t count_ = 0;
};

/// Stride-1 windows over a whole log; max(0, len - depth + 1) features.
std::vector<WindowFeature> windows_of(std::span<const LabeledFrame> log, const WindowConfig& cfg = {});

}  // namespace canids
