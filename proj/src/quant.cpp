#include "canids/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "canids/serialize.hpp"

namespace canids::quant {

int fraction_bits_for(double max_abs) {
    if (!std::isfinite(max_abs) || max_abs < 0.0) throw NumericError("tensor range is not finite");
    if (max_abs == 0.0) return kZeroTensorFractionBits;
    int f = static_cast<int>(std::floor(std::log2(kQMax / max_abs)));
    while (std::ldexp(max_abs, f) > kQMax) --f;
    while (std::ldexp(max_abs, f + 1) <= kQMax) ++f;
    return f;
}

double round_half_even(double x) {
    const double lower = std::floor(x);
    const double diff = x - lower;  // exact
    if (diff > 0.5) return lower + 1.0;
    if (diff < 0.5) return lower;
    return std::fmod(lower, 2.0) == 0.0 ? lower : lower + 1.0;
}

std::int8_t quantize_value(double real, int fraction_bits) {
    const double q = round_half_even(std::ldexp(real, fraction_bits));
    return static_cast<std::int8_t>(std::clamp(q, double{kQMin}, double{kQMax}));
}

std::int64_t shift_round_half_even(std::int64_t acc, int shift) {
    if (shift >= 0) {
        if (shift >= 62) return acc == 0 ? 0 : (acc > 0 ? std::numeric_limits<std::int64_t>::max() : std::numeric_limits<std::int64_t>::min());
        const std::int64_t limit = std::numeric_limits<std::int64_t>::max() >> shift;
        if (acc > limit) return std::numeric_limits<std::int64_t>::max();
        if (acc < -limit) return std::numeric_limits<std::int64_t>::min();
        return acc * (std::int64_t{1} << shift);
    }
    const int s = -shift;
    if (s >= 62) return 0;  // |acc| < 2^61 in every caller
    const std::int64_t q = acc >> s;  // floor
    const std::int64_t rem = acc - q * (std::int64_t{1} << s);
    const std::int64_t half = std::int64_t{1} << (s - 1);
    if (rem > half) return q + 1;
    if (rem < half) return q;
    return (q & 1) ? q + 1 : q;
}

CalibrationSet make_calibration_set(std::span<const WindowFeature> windows, std::size_t size) {
    CalibrationSet calib;
    if (windows.empty() || size == 0) return calib;
    const std::size_t take = std::min(size, windows.size());
    calib.samples.reserve(take);
    for (std::size_t i = 0; i < take; ++i) calib.samples.push_back(windows[i * windows.size() / take]);
    return calib;
}

namespace {

struct Saturation {
    std::vector<std::size_t> saturated;
    std::vector<std::size_t> total;
};

// Shared integer kernel. `acts` must hold at least max layer width entries
// twice; `sat` collects per-layer saturation counts when non-null.
std::int64_t run_integer(const QuantModel& model, std::span<const std::int8_t> x, Saturation* sat) {
    if (static_cast<int>(x.size()) != model.input_width()) {
        throw DataError("quantized model expects " + std::to_string(model.input_width()) + " inputs, got " +
                        std::to_string(x.size()));
    }
    std::vector<std::int8_t> cur(x.begin(), x.end());
    std::vector<std::int8_t> next;
    for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
        const QuantLayer& layer = model.layers[l];
        const int shift = layer.scales.output.fraction_bits - layer.scales.input.fraction_bits -
                          layer.scales.weight.fraction_bits;
        next.resize(static_cast<std::size_t>(layer.out));
        const std::int8_t* w = layer.weight.data();
        for (int o = 0; o < layer.out; ++o, w += layer.in) {
            std::int32_t acc = layer.bias[static_cast<std::size_t>(o)];
            for (int i = 0; i < layer.in; ++i) acc += std::int32_t{w[i]} * std::int32_t{cur[static_cast<std::size_t>(i)]};
            const std::int64_t scaled = shift_round_half_even(acc, shift);
            if (sat) {
                sat->total[l] += 1;
                if (scaled > kQMax) sat->saturated[l] += 1;
            }
            const std::int64_t y = std::clamp<std::int64_t>(scaled, kQMin, kQMax);
            next[static_cast<std::size_t>(o)] = static_cast<std::int8_t>(std::max<std::int64_t>(0, y));
        }
        cur.swap(next);
    }
    const QuantLayer& last = model.layers.back();
    std::int32_t acc = last.bias[0];
    for (int i = 0; i < last.in; ++i) acc += std::int32_t{last.weight[static_cast<std::size_t>(i)]} * std::int32_t{cur[static_cast<std::size_t>(i)]};
    return acc;
}

double logit_from_accumulator(const QuantModel& model, std::int64_t acc) {
    const auto& s = model.layers.back().scales;
    return std::ldexp(static_cast<double>(acc), -(s.input.fraction_bits + s.weight.fraction_bits));
}

}  // namespace

Scales calibrate(const nn::MlpModel& folded, const CalibrationSet& calib) {
    if (folded.has_batchnorm()) throw ConfigError("calibrate expects a batch-norm-free (folded) model");
    if (calib.samples.empty()) throw DataError("calibration set is empty");
    folded.validate();

    const nn::Dataset ds = nn::make_dataset(calib.samples);
    Scales scales;
    nn::Matrix<float> a = ds.x;
    int input_f = 0;
    for (std::size_t l = 0; l < folded.dense.size(); ++l) {
        const auto& d = folded.dense[l];
        LayerScales ls;
        ls.input.fraction_bits = input_f;
        ls.weight.fraction_bits = fraction_bits_for(static_cast<double>(d.weight.cwiseAbs().maxCoeff()));
        if (l + 1 < folded.dense.size()) {
            nn::Matrix<float> z = a * d.weight.transpose();
            z.rowwise() += d.bias.transpose();
            a = z.cwiseMax(0.0f);
            ls.output.fraction_bits = fraction_bits_for(static_cast<double>(a.maxCoeff()));
            input_f = ls.output.fraction_bits;
        } else {
            ls.output.fraction_bits = ls.input.fraction_bits + ls.weight.fraction_bits;
        }
        scales.layers.push_back(ls);
    }

    const QuantModel probe = quantize(folded, scales);
    Saturation sat{std::vector<std::size_t>(scales.layers.size(), 0), std::vector<std::size_t>(scales.layers.size(), 0)};
    for (const auto& w : calib.samples) run_integer(probe, w.values, &sat);
    for (std::size_t l = 0; l < scales.layers.size(); ++l) {
        scales.saturation_rate.push_back(sat.total[l] == 0 ? 0.0
                                                           : static_cast<double>(sat.saturated[l]) /
                                                                 static_cast<double>(sat.total[l]));
    }
    return scales;
}

void QuantModel::validate() const {
    if (layers.empty()) throw ConfigError("quantized model has no layers");
    if (layers.front().scales.input.fraction_bits != 0) throw ConfigError("first layer input scale must be f = 0");
    if (layers.back().out != 1) throw ConfigError("quantized model must end in one output unit");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& q = layers[l];
        if (q.in < 1 || q.out < 1 || q.weight.size() != static_cast<std::size_t>(q.in) * static_cast<std::size_t>(q.out) ||
            q.bias.size() != static_cast<std::size_t>(q.out)) {
            throw ConfigError("quantized layer " + std::to_string(l) + " has inconsistent shape");
        }
        if (l > 0) {
            const auto& prev = layers[l - 1];
            if (prev.out != q.in) throw ConfigError("quantized layer widths do not chain at layer " + std::to_string(l));
            if (prev.scales.output != q.scales.input) {
                throw ConfigError("layer " + std::to_string(l) + " input scale differs from producer output scale");
            }
        }
        for (int o = 0; o < q.out; ++o) {
            std::int64_t bound = std::abs(std::int64_t{q.bias[static_cast<std::size_t>(o)]});
            for (int i = 0; i < q.in; ++i) {
                bound += 128 * std::abs(std::int64_t{q.weight[static_cast<std::size_t>(o) * static_cast<std::size_t>(q.in) + static_cast<std::size_t>(i)]});
            }
            if (bound > std::numeric_limits<std::int32_t>::max()) {
                throw ConfigError("layer " + std::to_string(l) + " accumulator may overflow int32");
            }
        }
    }
}

QuantModel quantize(const nn::MlpModel& folded, const Scales& scales) {
    if (folded.has_batchnorm()) throw ConfigError("quantize expects a batch-norm-free (folded) model");
    folded.validate();
    if (scales.layers.size() != folded.dense.size()) throw ConfigError("scale count does not match layer count");

    QuantModel q;
    q.source_hash = io::model_hash(folded);
    for (std::size_t l = 0; l < folded.dense.size(); ++l) {
        const auto& d = folded.dense[l];
        QuantLayer layer;
        layer.in = static_cast<int>(d.weight.cols());
        layer.out = static_cast<int>(d.weight.rows());
        layer.scales = scales.layers[l];
        const int fw = layer.scales.weight.fraction_bits;
        const int fb = layer.scales.input.fraction_bits + fw;
        layer.weight.resize(static_cast<std::size_t>(d.weight.size()));
        for (Eigen::Index i = 0; i < d.weight.size(); ++i) {
            layer.weight[static_cast<std::size_t>(i)] = quantize_value(d.weight.data()[i], fw);
        }
        for (Eigen::Index o = 0; o < d.bias.size(); ++o) {
            const double b = round_half_even(std::ldexp(static_cast<double>(d.bias(o)), fb));
            if (!(std::abs(b) <= std::numeric_limits<std::int32_t>::max())) {
                throw NumericError("bias of layer " + std::to_string(l) + " overflows int32 at f = " + std::to_string(fb));
            }
            layer.bias.push_back(static_cast<std::int32_t>(b));
        }
        q.layers.push_back(std::move(layer));
    }
    try {
        q.validate();
    } catch (const ConfigError& e) {
        throw NumericError(e.what());
    }
    return q;
}

std::int64_t qforward_logit_accumulator(const QuantModel& model, std::span<const std::int8_t> x) {
    return run_integer(model, x, nullptr);
}

double qforward(const QuantModel& model, std::span<const std::int8_t> x) {
    return nn::sigmoid(logit_from_accumulator(model, run_integer(model, x, nullptr)));
}

std::vector<double> qpredict(const QuantModel& model, std::span<const WindowFeature> windows) {
    std::vector<double> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(qforward(model, w.values));
    return out;
}

std::vector<double> qpredict(const QuantModel& model, const nn::Matrix<float>& x) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(x.rows()));
    std::vector<std::int8_t> row(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) row[static_cast<std::size_t>(c)] = static_cast<std::int8_t>(x(r, c));
        out.push_back(qforward(model, row));
    }
    return out;
}

double verdict_agreement(std::span<const double> a, std::span<const double> b, double threshold) {
    if (a.size() != b.size()) throw DataError("score lists differ in length");
    if (a.empty()) return 1.0;
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += (a[i] >= threshold) == (b[i] >= threshold) ? 1 : 0;
    return static_cast<double>(same) / static_cast<double>(a.size());
}

}  // namespace canids::quant
