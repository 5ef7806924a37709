#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "canids/nn.hpp"
#include "canids/train.hpp"
#include "canids/window.hpp"

namespace canids::quant {

/// Power-of-two scale: real ~= q * 2^-fraction_bits.
struct TensorQuant {
    int fraction_bits = 0;

    double scale() const { return std::ldexp(1.0, -fraction_bits); }
    bool operator==(const TensorQuant&) const = default;
};

inline constexpr int kZeroTensorFractionBits = 7;
inline constexpr int kQMin = -128;
inline constexpr int kQMax = 127;

/// Largest f with max_abs * 2^f <= 127; all-zero tensors get f = 7.
int fraction_bits_for(double max_abs);

/// Round half to even, exact for any double.
double round_half_even(double x);

/// clamp(round_half_even(real * 2^f), -128, 127)
std::int8_t quantize_value(double real, int fraction_bits);

/// round_half_even(acc * 2^shift) in exact integer arithmetic.
std::int64_t shift_round_half_even(std::int64_t acc, int shift);

struct LayerScales {
    TensorQuant input;
    TensorQuant weight;
    TensorQuant output;  // activation scale; for the last layer the accumulator scale

    bool operator==(const LayerScales&) const = default;
};

struct Scales {
    std::vector<LayerScales> layers;
    /// Calibration-set activations whose quantized value saturated, per layer.
    std::vector<double> saturation_rate;
};

/// Calibration sample used for activation ranges (labels ignored).
struct CalibrationSet {
    std::vector<WindowFeature> samples;
    static constexpr std::size_t kDefaultSize = 1024;
};

/// Evenly strided sample of at most `size` windows.
CalibrationSet make_calibration_set(std::span<const WindowFeature> windows,
                                    std::size_t size = CalibrationSet::kDefaultSize);

/// Weight scales from weight max-abs, activation scales from max-abs of the
/// post-ReLU activations of the float model on the calibration set. The first
/// layer input is fixed at f = 0.
Scales calibrate(const nn::MlpModel& folded, const CalibrationSet& calib);

struct QuantLayer {
    std::vector<std::int8_t> weight;  // out x in, row-major
    std::vector<std::int32_t> bias;   // scale input.f + weight.f
    int in = 0;
    int out = 0;
    LayerScales scales;

    bool operator==(const QuantLayer&) const = default;
};

/// Folded network with int8 weights and int32 biases. Hidden layers requantize
/// to the next layer's input scale; the final accumulator is dequantized and
/// passed through a float sigmoid.
struct QuantModel {
    std::vector<QuantLayer> layers;
    std::string source_hash;

    int input_width() const { return layers.empty() ? 0 : layers.front().in; }

    /// Structural checks: scale chaining, f = 0 input, shapes, and int32
    /// headroom of every accumulator. Throws ConfigError.
    void validate() const;
    bool operator==(const QuantModel&) const = default;
};

/// Throws NumericError if a bias or a worst-case accumulator leaves int32.
QuantModel quantize(const nn::MlpModel& folded, const Scales& scales);

/// Integer inference; returns the attack probability.
double qforward(const QuantModel& model, std::span<const std::int8_t> x);

/// Integer inference that also exposes the raw final accumulator.
std::int64_t qforward_logit_accumulator(const QuantModel& model, std::span<const std::int8_t> x);

std::vector<double> qpredict(const QuantModel& model, std::span<const WindowFeature> windows);

/// Rows of `x` must hold integral values in [-128, 127].
std::vector<double> qpredict(const QuantModel& model, const nn::Matrix<float>& x);

/// Fraction of positions where two score lists give the same verdict.
double verdict_agreement(std::span<const double> a, std::span<const double> b, double threshold = 0.5);

// ---------------------------------------------------------------------------
// Quantization-aware fine-tuning.

/// Fake-quantizes `real` at `fraction_bits` to a `bits`-wide signed grid.
double fake_quantize(double real, int fraction_bits, int bits = 8);

/// Float forward pass of a folded model with weights, biases and hidden
/// activations fake-quantized at `scales` (bias on the accumulator grid).
/// With `bits` wide enough this approaches the float forward pass.
nn::Vector<double> fake_quant_forward(const nn::MlpModel& folded, const Scales& scales, const nn::Matrix<float>& x,
                                      int bits = 8);

struct FinetuneResult {
    QuantModel model;
    nn::MlpModel shadow;        // float weights after fine-tuning
    double plain_val_accuracy;  // quantize() without fine-tuning
    double final_val_accuracy;
    nn::TrainHistory history;
};

/// Fine-tunes float shadow weights through fake-quantized forward passes with
/// straight-through gradients, keeping the scales fixed, and returns the
/// re-quantized model with the best validation accuracy; the plain quantized
/// model counts as epoch -1, so the result is never worse than quantize().
FinetuneResult finetune_qat(const nn::MlpModel& folded, const Scales& scales, const nn::Dataset& train_set,
                            const nn::Dataset& val_set, const nn::TrainConfig& cfg);

}  // namespace canids::quant
