#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "canids/error.hpp"

namespace canids::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Mode { Train, Infer };

/// Dense stack: hidden layers are dense -> batchnorm -> ReLU -> dropout, the
/// last layer is dense -> sigmoid.
struct ModelSpec {
    std::vector<int> layer_units{40, 256, 128, 64, 32, 1};
    double dropout_rate = 0.2;
    bool batchnorm = true;
    double bn_epsilon = 1e-3;
    double bn_momentum = 0.99;

    void validate() const;
    int input_width() const { return layer_units.front(); }
    std::size_t dense_layers() const { return layer_units.size() - 1; }
    std::size_t hidden_layers() const { return layer_units.size() - 2; }

    bool operator==(const ModelSpec&) const = default;
};

template <typename T>
struct DenseLayer {
    Matrix<T> weight;  // out x in
    Vector<T> bias;
};

template <typename T>
struct BatchNormLayer {
    Vector<T> gamma;
    Vector<T> beta;
    Vector<T> running_mean;
    Vector<T> running_var;
};

template <typename T>
struct BasicMlp {
    ModelSpec spec;
    std::vector<DenseLayer<T>> dense;
    std::vector<BatchNormLayer<T>> norms;  // empty once folded

    bool has_batchnorm() const { return !norms.empty(); }

    /// Weights plus biases of the dense layers.
    std::size_t dense_parameter_count() const;
    /// Dense parameters plus batch-norm gamma and beta.
    std::size_t trainable_parameter_count() const;

    /// Throws ConfigError when tensor shapes disagree with the spec.
    void validate() const;

    template <typename U>
    BasicMlp<U> cast() const {
        BasicMlp<U> out;
        out.spec = spec;
        for (const auto& d : dense) out.dense.push_back({d.weight.template cast<U>(), d.bias.template cast<U>()});
        for (const auto& n : norms) {
            out.norms.push_back({n.gamma.template cast<U>(), n.beta.template cast<U>(),
                                 n.running_mean.template cast<U>(), n.running_var.template cast<U>()});
        }
        return out;
    }
};

using MlpModel = BasicMlp<float>;

/// He-uniform weights (limit sqrt(6 / fan_in)), zero biases, identity
/// batch-norm. Deterministic per seed.
MlpModel init_model(const ModelSpec& spec, std::uint64_t seed);

/// Inverted-dropout keep masks, one (batch x units) matrix per hidden layer
/// with entries 0 or 1/(1-rate). Empty when the rate is zero.
template <typename T>
using DropoutMasks = std::vector<Matrix<T>>;

template <typename T>
DropoutMasks<T> make_dropout_masks(const ModelSpec& spec, Eigen::Index batch, std::uint64_t seed);

/// Batch forward pass, one sample per row. Train mode normalises with batch
/// statistics and applies `masks` when given; Infer mode uses running
/// statistics and never drops.
template <typename T>
Vector<T> forward_batch(const BasicMlp<T>& model, const Matrix<T>& x, Mode mode,
                        const DropoutMasks<T>* masks = nullptr);

/// Single-sample forward. In Train mode the dropout mask is drawn from `seed`.
double forward(const MlpModel& model, std::span<const float> x, Mode mode = Mode::Infer,
               std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Loss and backpropagation.

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
template <typename T>
T bce_loss(const Vector<T>& p, const Vector<T>& y);

template <typename T>
struct Gradients {
    std::vector<DenseLayer<T>> dense;
    std::vector<Vector<T>> gamma;
    std::vector<Vector<T>> beta;
};

/// Per-hidden-layer batch mean and (biased) variance seen in a Train pass.
template <typename T>
struct BatchStatistics {
    std::vector<Vector<T>> mean;
    std::vector<Vector<T>> var;
};

/// Loss and its gradient with respect to every trainable tensor. The gradient
/// is taken through the logit, which equals the derivative of the clamped
/// loss whenever no probability sits on the clamp.
template <typename T>
T loss_and_gradients(const BasicMlp<T>& model, const Matrix<T>& x, const Vector<T>& y, Mode mode,
                     const DropoutMasks<T>* masks, Gradients<T>& grads,
                     BatchStatistics<T>* stats = nullptr);

/// Trainable tensors as flat spans, in a fixed order shared with
/// gradient_views().
template <typename T>
std::vector<std::span<T>> parameter_views(BasicMlp<T>& model);
template <typename T>
std::vector<std::span<T>> gradient_views(Gradients<T>& grads);

// ---------------------------------------------------------------------------

/// Absorbs each inference-mode batch-norm into the preceding dense layer:
/// W' = diag(s) W, b' = s (b - mean) + beta with s = gamma / sqrt(var + eps).
template <typename T>
BasicMlp<T> fold_batchnorm(const BasicMlp<T>& model);

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t parameters_checked = 0;
    std::size_t worst_tensor = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Central-difference check (float64) of loss_and_gradients on one batch.
/// Relative error is |a - n| / max(|a|, |n|, floor).
GradientCheckResult gradient_check(const BasicMlp<double>& model, const Matrix<double>& x,
                                   const Vector<double>& y, Mode mode = Mode::Train,
                                   const DropoutMasks<double>* masks = nullptr, double step = 1e-6,
                                   double floor = 1e-3);

template <typename T>
T sigmoid(T z) {
    return T(1) / (T(1) + std::exp(-z));
}

}  // namespace canids::nn
