#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "canids/nn.hpp"
#include "canids/window.hpp"

namespace canids::nn {

/// Window features as a float design matrix (signed bytes cast to float, no
/// further scaling) plus 0/1 labels.
struct Dataset {
    Matrix<float> x;
    Vector<float> y;

    Eigen::Index size() const { return x.rows(); }
    bool empty() const { return x.rows() == 0; }
};

Dataset make_dataset(std::span<const WindowFeature> windows);

/// Rows of `a` followed by rows of `b`; either may be empty.
Dataset concat(const Dataset& a, const Dataset& b);

/// Stop when validation accuracy sits more than `max_drop` below its best for
/// `patience` consecutive epochs.
struct EarlyStopping {
    bool enabled = true;
    double max_drop = 0.02;
    int patience = 5;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    int epochs = 50;
    int batch_size = 64;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    bool checkpoint_every_epoch = false;
    std::filesystem::path checkpoint_dir;  // empty: keep checkpoints in memory only
    EarlyStopping early_stop;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    std::string checkpoint;
};

struct TrainHistory {
    double initial_val_loss = 0.0;
    double initial_val_accuracy = 0.0;
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    bool stopped_early = false;
};

struct TrainResult {
    MlpModel model;  // best checkpoint by validation accuracy
    TrainHistory history;
};

/// Adam over a fixed list of parameter tensors.
template <typename T>
class Adam {
public:
    Adam(double learning_rate, double beta1, double beta2, double epsilon)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

    void step(std::span<const std::span<T>> params, std::span<const std::span<T>> grads);
    long long steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

/// Mini-batch Adam on binary cross-entropy with per-epoch validation,
/// batch-norm running statistics (momentum from the spec) and early stopping.
/// Throws NumericError on a non-finite loss.
TrainResult train(MlpModel model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg);

/// Continues training a trained model on a second attack's data with the same
/// recipe. Zero epochs returns the model unchanged.
TrainResult transfer_train(const MlpModel& trained, const Dataset& train_set, const Dataset& val_set,
                           const TrainConfig& cfg);

/// Infer-mode probabilities for every row.
std::vector<double> predict(const MlpModel& model, const Matrix<float>& x);

double accuracy(std::span<const double> scores, const Vector<float>& labels, double threshold = 0.5);

}  // namespace canids::nn
