#include "canids/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "canids/serialize.hpp"
#include "rng.hpp"

namespace canids::nn {

Dataset make_dataset(std::span<const WindowFeature> windows) {
    Dataset ds;
    if (windows.empty()) return ds;
    const auto width = static_cast<Eigen::Index>(windows.front().values.size());
    ds.x.resize(static_cast<Eigen::Index>(windows.size()), width);
    ds.y.resize(static_cast<Eigen::Index>(windows.size()));
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        if (static_cast<Eigen::Index>(w.values.size()) != width) throw DataError("mixed window widths");
        const auto row = static_cast<Eigen::Index>(i);
        for (Eigen::Index j = 0; j < width; ++j) ds.x(row, j) = static_cast<float>(w.values[static_cast<std::size_t>(j)]);
        ds.y(row) = w.label == Label::Attack ? 1.0f : 0.0f;
    }
    return ds;
}

Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    if (a.x.cols() != b.x.cols()) throw DataError("cannot join datasets of different widths");
    Dataset out;
    out.x.resize(a.size() + b.size(), a.x.cols());
    out.x << a.x, b.x;
    out.y.resize(a.size() + b.size());
    out.y << a.y, b.y;
    return out;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("Adam betas must lie in [0,1)");
    }
    if (!(adam_epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
    if (early_stop.patience < 1) throw ConfigError("early-stop patience must be at least 1");
}

template <typename T>
void Adam<T>::step(std::span<const std::span<T>> params, std::span<const std::span<T>> grads) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.size(), T(0));
            v_.emplace_back(p.size(), T(0));
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const T step_size = static_cast<T>(lr_ * std::sqrt(c2) / c1);
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T eps_hat = static_cast<T>(eps_ * std::sqrt(c2));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& m = m_[k];
        auto& v = v_[k];
        const auto& g = grads[k];
        auto& p = params[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            p[i] -= step_size * m[i] / (std::sqrt(v[i]) + eps_hat);
        }
    }
}

template class Adam<float>;
template class Adam<double>;

std::vector<double> predict(const MlpModel& model, const Matrix<float>& x) {
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    constexpr Eigen::Index kChunk = 2048;
    for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
        const Eigen::Index rows = std::min(kChunk, x.rows() - start);
        const Matrix<float> block = x.middleRows(start, rows);
        const Vector<float> p = forward_batch(model, block, Mode::Infer);
        for (Eigen::Index i = 0; i < rows; ++i) out[static_cast<std::size_t>(start + i)] = p(i);
    }
    return out;
}

double accuracy(std::span<const double> scores, const Vector<float>& labels, double threshold) {
    if (scores.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool attack = scores[i] >= threshold;
        correct += attack == (labels(static_cast<Eigen::Index>(i)) > 0.5f) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

namespace {

struct Evaluation {
    double loss;
    double accuracy;
};

Evaluation evaluate(const MlpModel& model, const Dataset& ds) {
    const auto scores = predict(model, ds.x);
    Vector<double> p(ds.size());
    for (Eigen::Index i = 0; i < ds.size(); ++i) p(i) = scores[static_cast<std::size_t>(i)];
    return {bce_loss<double>(p, ds.y.cast<double>()), accuracy(scores, ds.y)};
}

void update_running_stats(MlpModel& model, const BatchStatistics<float>& stats) {
    const auto m = static_cast<float>(model.spec.bn_momentum);
    for (std::size_t l = 0; l < model.norms.size(); ++l) {
        auto& bn = model.norms[l];
        bn.running_mean = m * bn.running_mean + (1.0f - m) * stats.mean[l];
        bn.running_var = m * bn.running_var + (1.0f - m) * stats.var[l];
    }
}

TrainResult run_training(MlpModel model, const Dataset& train_set, const Dataset& val_set,
                         const TrainConfig& cfg) {
    if (train_set.empty() || val_set.empty()) throw DataError("training and validation sets must be non-empty");
    if (train_set.x.cols() != model.spec.input_width() || val_set.x.cols() != model.spec.input_width()) {
        throw DataError("dataset width does not match model input");
    }
    model.validate();

    detail::Rng rng(cfg.seed);
    Adam<float> adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    auto params = parameter_views(model);
    Gradients<float> grads;

    TrainResult result{model, {}};
    const Evaluation initial = evaluate(model, val_set);
    result.history.initial_val_loss = initial.loss;
    result.history.initial_val_accuracy = initial.accuracy;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(train_set.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    double best_accuracy = -1.0;
    double best_loss = 0.0;
    int below_best = 0;
    const Eigen::Index width = train_set.x.cols();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        Eigen::Index seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const auto rows = static_cast<Eigen::Index>(end - start);
            Matrix<float> xb(rows, width);
            Vector<float> yb(rows);
            for (Eigen::Index r = 0; r < rows; ++r) {
                const Eigen::Index src = order[start + static_cast<std::size_t>(r)];
                xb.row(r) = train_set.x.row(src);
                yb(r) = train_set.y(src);
            }
            const auto masks = make_dropout_masks<float>(model.spec, rows, rng.next());
            BatchStatistics<float> stats;
            const float loss = loss_and_gradients(model, xb, yb, Mode::Train, &masks, grads, &stats);
            if (!std::isfinite(loss)) {
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch starting " +
                                   std::to_string(start));
            }
            auto grad_views = gradient_views(grads);
            adam.step(params, grad_views);
            update_running_stats(model, stats);
            loss_sum += static_cast<double>(loss) * static_cast<double>(rows);
            seen += rows;
        }

        const Evaluation val = evaluate(model, val_set);
        if (!std::isfinite(val.loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), val.loss, val.accuracy, {}};

        if (cfg.checkpoint_every_epoch && !cfg.checkpoint_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%03d.ckpt.json", epoch);
            const auto path = cfg.checkpoint_dir / name;
            io::save_checkpoint(path, model,
                                {{"epoch", epoch},
                                 {"train_loss", rec.train_loss},
                                 {"val_loss", rec.val_loss},
                                 {"val_accuracy", rec.val_accuracy}});
            rec.checkpoint = path.string();
        }

        if (val.accuracy > best_accuracy || (val.accuracy == best_accuracy && val.loss < best_loss)) {
            best_accuracy = val.accuracy;
            best_loss = val.loss;
            result.model = model;
            result.history.best_epoch = epoch;
        }
        result.history.epochs.push_back(rec);

        below_best = val.accuracy < best_accuracy - cfg.early_stop.max_drop ? below_best + 1 : 0;
        if (cfg.early_stop.enabled && below_best >= cfg.early_stop.patience) {
            result.history.stopped_early = true;
            break;
        }
    }
    return result;
}

}  // namespace

TrainResult train(MlpModel model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg) {
    cfg.validate();
    return run_training(std::move(model), train_set, val_set, cfg);
}

TrainResult transfer_train(const MlpModel& trained, const Dataset& train_set, const Dataset& val_set,
                           const TrainConfig& cfg) {
    if (cfg.epochs == 0) {
        TrainResult unchanged{trained, {}};
        if (!val_set.empty()) {
            const Evaluation e = evaluate(trained, val_set);
            unchanged.history.initial_val_loss = e.loss;
            unchanged.history.initial_val_accuracy = e.accuracy;
        }
        return unchanged;
    }
    return train(trained, train_set, val_set, cfg);
}

}  // namespace canids::nn
