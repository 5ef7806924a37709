#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "canids/error.hpp"

namespace canids {

enum class Label : std::uint8_t { Normal = 0, Attack = 1 };

inline constexpr std::uint16_t kMaxBaseId = 0x7FF;
inline constexpr std::size_t kMaxDlc = 8;
inline constexpr std::size_t kEncodedFrameBytes = 10;

/// One CAN 2.0A message as recorded in a Car-Hacking style log.
///
/// `payload` always holds 8 bytes; bytes past `dlc` are kept at zero so that
/// defaulted comparison matches comparison of the first `dlc` bytes.
struct LabeledFrame {
    double timestamp = 0.0;
    std::uint16_t can_id = 0;
    std::uint8_t dlc = 0;
    std::array<std::uint8_t, kMaxDlc> payload{};
    Label label = Label::Normal;

    std::span<const std::uint8_t> data() const { return {payload.data(), dlc}; }

    bool operator==(const LabeledFrame&) const = default;
};

/// Builds a frame and checks the ID and DLC invariants.
LabeledFrame make_frame(double timestamp, std::uint16_t can_id,
                        std::span<const std::uint8_t> data, Label label = Label::Normal);

/// Parses one record: `timestamp,ID(hex),DLC,byte0,...,byte(DLC-1)[,R|T]`.
/// Throws ParseError naming the offending field and `line_number`.
LabeledFrame parse_frame_record(std::string_view line, std::size_t line_number = 1);

/// Canonical record text; parse_frame_record(format_frame_record(f)) == f for
/// frames whose timestamps are whole microseconds.
std::string format_frame_record(const LabeledFrame& frame);

/// Two big-endian ID bytes followed by the payload, zero-padded to 8 bytes.
std::array<std::uint8_t, kEncodedFrameBytes> encode_frame_bytes(const LabeledFrame& frame);

std::vector<LabeledFrame> read_log(std::istream& in);
std::vector<LabeledFrame> read_log_file(const std::filesystem::path& path);
void write_log(std::ostream& out, std::span<const LabeledFrame> frames);
void write_log_file(const std::filesystem::path& path, std::span<const LabeledFrame> frames);

struct LabelCounts {
    std::size_t normal = 0;
    std::size_t attack = 0;

    std::size_t total() const { return normal + attack; }
    double attack_fraction() const {
        return total() == 0 ? 0.0 : static_cast<double>(attack) / static_cast<double>(total());
    }
};

LabelCounts count_labels(std::span<const LabeledFrame> frames);

// ---------------------------------------------------------------------------
// Chronological train/validation/test split.

struct SplitRatios {
    double train = 0.80;
    double validation = 0.15;
    double test = 0.05;
};

template <typename T>
struct DatasetSplit {
    std::vector<T> train;
    std::vector<T> validation;
    std::vector<T> test;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t validation = 0;
    std::size_t test = 0;
};

/// Contiguous partition sizes for `count` items. Throws ConfigError unless the
/// ratios are non-negative and sum to 1 within 1e-9.
SplitSizes split_sizes(std::size_t count, const SplitRatios& ratios);

/// Splits in arrival order; no shuffling so temporal context survives.
template <typename T>
DatasetSplit<T> split_dataset(std::span<const T> items, const SplitRatios& ratios = {}) {
    const SplitSizes sizes = split_sizes(items.size(), ratios);
    DatasetSplit<T> out;
    auto first = items.begin();
    out.train.assign(first, first + static_cast<std::ptrdiff_t>(sizes.train));
    first += static_cast<std::ptrdiff_t>(sizes.train);
    out.validation.assign(first, first + static_cast<std::ptrdiff_t>(sizes.validation));
    first += static_cast<std::ptrdiff_t>(sizes.validation);
    out.test.assign(first, items.end());
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic traffic.

enum class AttackKind { DoS, Fuzzy, SpoofRpm, SpoofGear };

std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view text);

/// CAN IDs the spoofing attacks forge (engine RPM and gear position).
inline constexpr std::uint16_t kRpmId = 0x316;
inline constexpr std::uint16_t kGearId = 0x43F;

/// Payload model of one periodic normal ID: constant bytes, an optional
/// wrapping counter, and occasional single-byte jitter.
struct PayloadProcess {
    std::uint8_t dlc = 8;
    std::array<std::uint8_t, kMaxDlc> base{};
    int counter_byte = -1;  // -1: no counter
    std::uint8_t counter_step = 1;
    double jitter_probability = 0.0;
    std::uint8_t jitter_amplitude = 0;
};

struct NormalId {
    std::uint16_t can_id = 0;
    double period = 0.01;  // seconds
    PayloadProcess payload;
};

struct SyntheticConfig {
    std::vector<NormalId> normal_ids;
    AttackKind attack_kind = AttackKind::DoS;
    double attack_rate = 3000.0;  // injections per second inside a burst
    double duration = 10.0;       // seconds
    double attack_fraction_target = 0.3;
    std::uint64_t seed = 1;
    /// Attack bursts recur once per period so every chronological slice of
    /// the log contains both classes.
    double burst_period = 0.05;

    void validate() const;
};

/// A deterministic 26-ID vehicle whose ID list follows the Car Hacking
/// capture. Includes kRpmId and kGearId.
std::vector<NormalId> default_vehicle_profile(std::uint64_t seed = 0x5EED);

/// Messages per second emitted by the normal IDs alone.
double normal_message_rate(std::span<const NormalId> ids);

/// Duration that yields roughly `frames` messages in total for the config's
/// normal IDs and attack fraction.
double duration_for_frame_count(const SyntheticConfig& cfg, std::size_t frames);

/// Defaults per attack kind: injection rate and attack share modelled on the
/// open dataset (DoS 3333/s, fuzzing 2000/s, spoofing 1000/s).
SyntheticConfig default_synthetic_config(AttackKind kind, std::uint64_t seed);

/// Time-ordered labeled stream; bit-identical for identical configs.
std::vector<LabeledFrame> generate_synthetic_log(const SyntheticConfig& cfg);

}  // namespace canids
