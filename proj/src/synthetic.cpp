#include <algorithm>
#include <cmath>

#include "canids/canlog.hpp"
#include "rng.hpp"

namespace canids {

namespace {

using detail::Rng;

double to_microseconds(double t) { return std::round(t * 1e6) / 1e6; }

struct ProfileEntry {
    std::uint16_t id;
    int period_ms;
    std::uint8_t dlc;
};

// IDs and periods resemble the capture vehicle; payloads are synthetic.
constexpr ProfileEntry kProfile[] = {
    {0x002, 10, 8},  {0x130, 10, 8},  {0x131, 10, 8},  {0x140, 10, 8},  {0x153, 10, 8},
    {0x164, 10, 8},  {0x18F, 10, 8},  {0x220, 10, 8},  {0x260, 10, 8},  {0x2A0, 10, 8},
    {0x2C0, 10, 8},  {0x316, 10, 8},  {0x329, 10, 8},  {0x350, 20, 8},  {0x370, 10, 8},
    {0x430, 20, 8},  {0x43F, 10, 8},  {0x440, 10, 8},  {0x4B1, 20, 8},  {0x4F0, 20, 8},
    {0x4F1, 100, 4}, {0x545, 10, 8},  {0x5A0, 100, 8}, {0x5A2, 100, 8}, {0x5F0, 200, 2},
    {0x690, 100, 8},
};

std::array<std::uint8_t, kMaxDlc> spoof_template(Rng& rng, const SyntheticConfig& cfg,
                                                 std::uint16_t id) {
    const PayloadProcess* legit = nullptr;
    for (const auto& n : cfg.normal_ids) {
        if (n.can_id == id) legit = &n.payload;
    }
    while (true) {
        std::array<std::uint8_t, kMaxDlc> t{};
        for (auto& b : t) b = rng.byte();
        if (legit == nullptr) return t;
        int differing = 0;
        for (std::size_t i = 0; i < kMaxDlc; ++i) {
            if (std::abs(int{t[i]} - int{legit->base[i]}) > 8) ++differing;
        }
        if (differing >= 4) return t;
    }
}

}  // namespace

std::string_view to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::DoS: return "dos";
        case AttackKind::Fuzzy: return "fuzzy";
        case AttackKind::SpoofRpm: return "rpm";
        case AttackKind::SpoofGear: return "gear";
    }
    return "unknown";
}

AttackKind parse_attack_kind(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "dos") return AttackKind::DoS;
    if (lower == "fuzzy" || lower == "fuzzing") return AttackKind::Fuzzy;
    if (lower == "rpm" || lower == "spoof_rpm") return AttackKind::SpoofRpm;
    if (lower == "gear" || lower == "spoof_gear") return AttackKind::SpoofGear;
    throw ConfigError("unknown attack kind '" + std::string(text) + "'");
}

void SyntheticConfig::validate() const {
    if (normal_ids.empty()) throw ConfigError("synthetic config needs at least one normal ID");
    if (!(attack_fraction_target > 0.0 && attack_fraction_target < 1.0)) {
        throw ConfigError("attack_fraction_target must lie in (0,1)");
    }
    if (!(duration > 0.0)) throw ConfigError("duration must be positive");
    if (!(attack_rate > 0.0)) throw ConfigError("attack_rate must be positive");
    if (!(burst_period > 0.0)) throw ConfigError("burst_period must be positive");
    for (const auto& n : normal_ids) {
        if (n.can_id > kMaxBaseId) throw ConfigError("normal ID exceeds 11-bit range");
        if (!(n.period > 0.0)) throw ConfigError("normal ID period must be positive");
        if (n.payload.dlc > kMaxDlc) throw ConfigError("normal ID dlc exceeds 8");
        if (n.payload.counter_byte >= static_cast<int>(n.payload.dlc)) {
            throw ConfigError("counter byte lies outside the payload");
        }
        if (n.payload.jitter_probability < 0.0 || n.payload.jitter_probability > 1.0) {
            throw ConfigError("jitter probability must lie in [0,1]");
        }
    }
}

std::vector<NormalId> default_vehicle_profile(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<NormalId> ids;
    for (const auto& e : kProfile) {
        NormalId n;
        n.can_id = e.id;
        n.period = e.period_ms / 1000.0;
        n.payload.dlc = e.dlc;
        for (std::size_t i = 0; i < e.dlc; ++i) n.payload.base[i] = rng.byte();
        // Roughly three in four IDs carry a rolling counter.
        if (rng.below(4) != 0) {
            n.payload.counter_byte = static_cast<int>(rng.below(e.dlc));
            n.payload.counter_step = static_cast<std::uint8_t>(1 + rng.below(2));
        }
        n.payload.jitter_probability = 0.02;
        n.payload.jitter_amplitude = 1;
        ids.push_back(n);
    }
    return ids;
}

double normal_message_rate(std::span<const NormalId> ids) {
    double rate = 0.0;
    for (const auto& n : ids) rate += 1.0 / n.period;
    return rate;
}

double duration_for_frame_count(const SyntheticConfig& cfg, std::size_t frames) {
    const double rate = normal_message_rate(cfg.normal_ids);
    if (!(rate > 0.0)) throw ConfigError("normal ID set has zero message rate");
    return static_cast<double>(frames) * (1.0 - cfg.attack_fraction_target) / rate;
}

SyntheticConfig default_synthetic_config(AttackKind kind, std::uint64_t seed) {
    SyntheticConfig cfg;
    cfg.normal_ids = default_vehicle_profile();
    cfg.attack_kind = kind;
    cfg.seed = seed;
    switch (kind) {
        case AttackKind::DoS:
            cfg.attack_rate = 3333.0;
            cfg.attack_fraction_target = 0.334;
            break;
        case AttackKind::Fuzzy:
            cfg.attack_rate = 2000.0;
            cfg.attack_fraction_target = 0.224;
            break;
        case AttackKind::SpoofRpm:
            cfg.attack_rate = 1000.0;
            cfg.attack_fraction_target = 0.196;
            break;
        case AttackKind::SpoofGear:
            cfg.attack_rate = 1000.0;
            cfg.attack_fraction_target = 0.173;
            break;
    }
    cfg.duration = duration_for_frame_count(cfg, 50'000);
    return cfg;
}

std::vector<LabeledFrame> generate_synthetic_log(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    std::vector<LabeledFrame> frames;

    for (const auto& n : cfg.normal_ids) {
        const PayloadProcess& p = n.payload;
        std::uint64_t emitted = 0;
        for (double t = rng.uniform() * n.period; t < cfg.duration; t += n.period, ++emitted) {
            LabeledFrame f;
            f.timestamp = to_microseconds(t);
            f.can_id = n.can_id;
            f.dlc = p.dlc;
            f.payload = p.base;
            std::fill(f.payload.begin() + p.dlc, f.payload.end(), std::uint8_t{0});
            if (p.counter_byte >= 0) {
                auto& c = f.payload[static_cast<std::size_t>(p.counter_byte)];
                c = static_cast<std::uint8_t>(c + p.counter_step * emitted);
            }
            if (p.jitter_amplitude > 0 && p.dlc > 0 && rng.uniform() < p.jitter_probability) {
                const auto j = static_cast<std::size_t>(rng.below(p.dlc));
                if (static_cast<int>(j) != p.counter_byte) {
                    const auto span = 2 * std::uint64_t{p.jitter_amplitude};
                    auto delta = static_cast<int>(rng.below(span)) - p.jitter_amplitude;
                    if (delta >= 0) ++delta;  // skip zero
                    f.payload[j] = static_cast<std::uint8_t>(f.payload[j] + delta);
                }
            }
            frames.push_back(f);
        }
    }

    const std::size_t normal_count = frames.size();
    const double f = cfg.attack_fraction_target;
    const auto attack_total = static_cast<std::uint64_t>(
        std::llround(f / (1.0 - f) * static_cast<double>(normal_count)));

    std::array<std::uint8_t, kMaxDlc> templ{};
    std::uint16_t spoof_id = 0;
    if (cfg.attack_kind == AttackKind::SpoofRpm || cfg.attack_kind == AttackKind::SpoofGear) {
        spoof_id = cfg.attack_kind == AttackKind::SpoofRpm ? kRpmId : kGearId;
        templ = spoof_template(rng, cfg, spoof_id);
    }

    const auto cycles = static_cast<std::uint64_t>(
        std::max(1.0, std::ceil(cfg.duration / cfg.burst_period)));
    std::uint64_t injected = 0;
    for (std::uint64_t k = 0; k < cycles; ++k) {
        const double start = static_cast<double>(k) * cfg.burst_period;
        const double end = std::min(cfg.duration, static_cast<double>(k + 1) * cfg.burst_period);
        // Share proportional to the cycle's length; the last cycle may be short.
        const auto share = [&](double t) {
            return static_cast<std::uint64_t>(std::floor(static_cast<double>(attack_total) * t / cfg.duration));
        };
        const std::uint64_t count = (k + 1 == cycles ? attack_total : share(end)) - share(start);
        const double burst = static_cast<double>(count) / cfg.attack_rate;
        if (burst > end - start) {
            throw ConfigError("attack_rate too low to reach attack_fraction_target");
        }
        const double offset = start + rng.uniform() * (end - start - burst);
        for (std::uint64_t j = 0; j < count; ++j, ++injected) {
            LabeledFrame a;
            a.timestamp = to_microseconds(offset + static_cast<double>(j) / cfg.attack_rate);
            a.label = Label::Attack;
            a.dlc = 8;
            switch (cfg.attack_kind) {
                case AttackKind::DoS:
                    a.can_id = 0x000;
                    break;
                case AttackKind::Fuzzy:
                    a.can_id = static_cast<std::uint16_t>(rng.below(kMaxBaseId + 1));
                    for (auto& b : a.payload) b = rng.byte();
                    break;
                case AttackKind::SpoofRpm:
                case AttackKind::SpoofGear:
                    a.can_id = spoof_id;
                    a.payload = templ;
                    a.payload[7] = static_cast<std::uint8_t>(templ[7] + (injected & 0x3));
                    break;
            }
            frames.push_back(a);
        }
    }

    std::stable_sort(frames.begin(), frames.end(),
                     [](const LabeledFrame& x, const LabeledFrame& y) { return x.timestamp < y.timestamp; });
    return frames;
}

}  // namespace canids
