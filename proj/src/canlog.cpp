#include "canids/canlog.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace canids {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return fields;
}

unsigned parse_hex(std::string_view text, std::size_t line, const std::string& field,
                   unsigned max_value) {
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
        text.remove_prefix(2);
    }
    if (text.empty()) throw ParseError(line, field, "empty hex value");
    unsigned value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 16);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ParseError(line, field, "invalid hex '" + std::string(text) + "'");
    }
    if (value > max_value) {
        throw ParseError(line, field, "value " + std::string(text) + " out of range");
    }
    return value;
}

}  // namespace

LabeledFrame make_frame(double timestamp, std::uint16_t can_id,
                        std::span<const std::uint8_t> data, Label label) {
    if (can_id > kMaxBaseId) throw DataError("CAN ID exceeds 11-bit range");
    if (data.size() > kMaxDlc) throw DataError("payload longer than 8 bytes");
    LabeledFrame frame;
    frame.timestamp = timestamp;
    frame.can_id = can_id;
    frame.dlc = static_cast<std::uint8_t>(data.size());
    std::copy(data.begin(), data.end(), frame.payload.begin());
    frame.label = label;
    return frame;
}

LabeledFrame parse_frame_record(std::string_view line, std::size_t line_number) {
    const auto fields = split_commas(trim(line));
    if (fields.size() < 3) {
        throw ParseError(line_number, "record", "expected at least timestamp, ID and DLC");
    }

    LabeledFrame frame;
    {
        const std::string_view ts = fields[0];
        const auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), frame.timestamp);
        if (ts.empty() || ec != std::errc{} || ptr != ts.data() + ts.size() ||
            !std::isfinite(frame.timestamp)) {
            throw ParseError(line_number, "timestamp", "not a number: '" + std::string(ts) + "'");
        }
    }
    frame.can_id = static_cast<std::uint16_t>(parse_hex(fields[1], line_number, "id", kMaxBaseId));

    {
        const std::string_view dlc = fields[2];
        unsigned value = 0;
        const auto [ptr, ec] = std::from_chars(dlc.data(), dlc.data() + dlc.size(), value);
        if (dlc.empty() || ec != std::errc{} || ptr != dlc.data() + dlc.size()) {
            throw ParseError(line_number, "dlc", "not a decimal integer: '" + std::string(dlc) + "'");
        }
        if (value > kMaxDlc) {
            throw ParseError(line_number, "dlc", "out of range 0..8: " + std::to_string(value));
        }
        frame.dlc = static_cast<std::uint8_t>(value);
    }

    const std::size_t rest = fields.size() - 3;
    if (rest == frame.dlc + 1u) {
        const std::string_view flag = fields.back();
        if (flag == "R" || flag == "r") {
            frame.label = Label::Normal;
        } else if (flag == "T" || flag == "t") {
            frame.label = Label::Attack;
        } else {
            throw ParseError(line_number, "flag", "expected R or T, got '" + std::string(flag) + "'");
        }
    } else if (rest != frame.dlc) {
        throw ParseError(line_number, "data",
                         "expected " + std::to_string(frame.dlc) + " data bytes, got " +
                             std::to_string(rest));
    }

    for (std::size_t i = 0; i < frame.dlc; ++i) {
        frame.payload[i] = static_cast<std::uint8_t>(
            parse_hex(fields[3 + i], line_number, "data[" + std::to_string(i) + "]", 0xFF));
    }
    return frame;
}

std::string format_frame_record(const LabeledFrame& frame) {
    char buf[128];
    int n = std::snprintf(buf, sizeof buf, "%.6f,%04x,%u", frame.timestamp,
                          static_cast<unsigned>(frame.can_id), static_cast<unsigned>(frame.dlc));
    std::string out(buf, static_cast<std::size_t>(n));
    for (std::uint8_t b : frame.data()) {
        n = std::snprintf(buf, sizeof buf, ",%02x", static_cast<unsigned>(b));
        out.append(buf, static_cast<std::size_t>(n));
    }
    out += frame.label == Label::Attack ? ",T" : ",R";
    return out;
}

std::array<std::uint8_t, kEncodedFrameBytes> encode_frame_bytes(const LabeledFrame& frame) {
    std::array<std::uint8_t, kEncodedFrameBytes> out{};
    out[0] = static_cast<std::uint8_t>(frame.can_id >> 8);
    out[1] = static_cast<std::uint8_t>(frame.can_id & 0xFF);
    std::copy_n(frame.payload.begin(), frame.dlc, out.begin() + 2);
    return out;
}

std::vector<LabeledFrame> read_log(std::istream& in) {
    std::vector<LabeledFrame> frames;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const std::string_view text = trim(line);
        if (text.empty() || text.front() == '#') continue;
        LabeledFrame frame = parse_frame_record(text, line_number);
        if (!frames.empty() && frame.timestamp < frames.back().timestamp) {
            throw ParseError(line_number, "timestamp", "decreases relative to the previous record");
        }
        frames.push_back(frame);
    }
    return frames;
}

std::vector<LabeledFrame> read_log_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open log " + path.string());
    return read_log(in);
}

void write_log(std::ostream& out, std::span<const LabeledFrame> frames) {
    for (const auto& frame : frames) out << format_frame_record(frame) << '\n';
}

void write_log_file(const std::filesystem::path& path, std::span<const LabeledFrame> frames) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write log " + path.string());
    write_log(out, frames);
    if (!out) throw DataError("write failed for " + path.string());
}

LabelCounts count_labels(std::span<const LabeledFrame> frames) {
    LabelCounts counts;
    for (const auto& f : frames) {
        if (f.label == Label::Attack) {
            ++counts.attack;
        } else {
            ++counts.normal;
        }
    }
    return counts;
}

SplitSizes split_sizes(std::size_t count, const SplitRatios& r) {
    if (r.train < 0 || r.validation < 0 || r.test < 0) {
        throw ConfigError("split ratios must be non-negative");
    }
    if (std::abs(r.train + r.validation + r.test - 1.0) > 1e-9) {
        throw ConfigError("split ratios must sum to 1");
    }
    const double n = static_cast<double>(count);
    SplitSizes sizes;
    sizes.train = std::min<std::size_t>(count, static_cast<std::size_t>(std::llround(n * r.train)));
    const auto upto_val = std::min<std::size_t>(
        count, static_cast<std::size_t>(std::llround(n * (r.train + r.validation))));
    sizes.validation = upto_val - std::min(upto_val, sizes.train);
    sizes.test = count - sizes.train - sizes.validation;
    return sizes;
}

}  // namespace canids
