#include <algorithm>
#include <cmath>
#include <numeric>

#include "canids/quant.hpp"
#include "rng.hpp"

namespace canids::quant {

double fake_quantize(double real, int fraction_bits, int bits) {
    const double hi = std::ldexp(1.0, bits - 1) - 1.0;
    const double lo = -std::ldexp(1.0, bits - 1);
    const double q = std::clamp(round_half_even(std::ldexp(real, fraction_bits)), lo, hi);
    return std::ldexp(q, -fraction_bits);
}

nn::Vector<double> fake_quant_forward(const nn::MlpModel& folded, const Scales& scales, const nn::Matrix<float>& x,
                                      int bits) {
    if (folded.has_batchnorm()) throw ConfigError("fake-quantized forward expects a folded model");
    if (scales.layers.size() != folded.dense.size()) throw ConfigError("scale count does not match layer count");
    nn::Matrix<double> a = x.cast<double>();
    for (std::size_t l = 0; l < folded.dense.size(); ++l) {
        const auto& d = folded.dense[l];
        const auto& s = scales.layers[l];
        const int fb = s.input.fraction_bits + s.weight.fraction_bits;
        const nn::Matrix<double> w = d.weight.cast<double>().unaryExpr(
            [&](double v) { return fake_quantize(v, s.weight.fraction_bits, bits); });
        const nn::Vector<double> b = d.bias.cast<double>().unaryExpr(
            [&](double v) { return std::ldexp(round_half_even(std::ldexp(v, fb)), -fb); });
        nn::Matrix<double> z = a * w.transpose();
        z.rowwise() += b.transpose();
        if (l + 1 == folded.dense.size()) {
            return z.col(0).unaryExpr([](double v) { return nn::sigmoid(v); });
        }
        a = z.unaryExpr([&](double v) { return std::max(0.0, fake_quantize(v, s.output.fraction_bits, bits)); });
    }
    return {};
}

namespace {

using nn::Matrix;
using nn::Vector;

// One QAT step on the float shadow model: fake-quantized forward, clipped
// straight-through backward. Returns the batch loss.
float qat_step(nn::MlpModel& shadow, const Scales& scales, const Matrix<float>& x, const Vector<float>& y,
               nn::Gradients<float>& grads) {
    const std::size_t layers = shadow.dense.size();
    std::vector<Matrix<float>> inputs;
    std::vector<Matrix<float>> pass;  // STE pass-through mask of each hidden activation
    std::vector<Matrix<float>> wq(layers);
    std::vector<Matrix<float>> wpass(layers);

    Matrix<float> a = x;
    Vector<float> logits;
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& d = shadow.dense[l];
        const auto& s = scales.layers[l];
        const int fw = s.weight.fraction_bits;
        const int fb = s.input.fraction_bits + fw;
        const float wmax = static_cast<float>(std::ldexp(double{kQMax}, -fw));
        const float wmin = static_cast<float>(std::ldexp(double{kQMin}, -fw));
        wq[l] = d.weight.unaryExpr([fw](float v) { return static_cast<float>(fake_quantize(v, fw)); });
        wpass[l] = d.weight.unaryExpr([&](float v) { return (v >= wmin && v <= wmax) ? 1.0f : 0.0f; });
        const Vector<float> bq = d.bias.unaryExpr(
            [fb](float v) { return static_cast<float>(std::ldexp(round_half_even(std::ldexp(double{v}, fb)), -fb)); });

        inputs.push_back(a);
        Matrix<float> z = a * wq[l].transpose();
        z.rowwise() += bq.transpose();
        if (l + 1 == layers) {
            logits = z.col(0);
            break;
        }
        const int fo = s.output.fraction_bits;
        const float amax = static_cast<float>(std::ldexp(double{kQMax}, -fo));
        pass.push_back(z.unaryExpr([amax](float v) { return (v > 0.0f && v <= amax) ? 1.0f : 0.0f; }));
        a = z.unaryExpr([fo](float v) { return std::max(0.0f, static_cast<float>(fake_quantize(v, fo))); });
    }

    const Vector<float> p = logits.unaryExpr([](float v) { return nn::sigmoid(v); });
    const float loss = nn::bce_loss<float>(p, y);

    grads.dense.resize(layers);
    Matrix<float> delta = (p - y) / static_cast<float>(x.rows());
    for (std::size_t li = layers; li-- > 0;) {
        if (li + 1 < layers) delta = delta.cwiseProduct(pass[li]);
        grads.dense[li].weight = (delta.transpose() * inputs[li]).cwiseProduct(wpass[li]);
        grads.dense[li].bias = delta.colwise().sum().transpose();
        if (li > 0) delta = delta * wq[li];
    }
    return loss;
}

double quant_accuracy(const QuantModel& q, const nn::Dataset& ds) {
    return nn::accuracy(qpredict(q, ds.x), ds.y);
}

}  // namespace

FinetuneResult finetune_qat(const nn::MlpModel& folded, const Scales& scales, const nn::Dataset& train_set,
                            const nn::Dataset& val_set, const nn::TrainConfig& cfg) {
    if (folded.has_batchnorm()) throw ConfigError("fine-tuning expects a folded model");
    if (val_set.empty()) throw DataError("validation set must be non-empty");

    FinetuneResult result{quantize(folded, scales), folded, 0.0, 0.0, {}};
    result.plain_val_accuracy = quant_accuracy(result.model, val_set);
    result.final_val_accuracy = result.plain_val_accuracy;
    result.history.initial_val_accuracy = result.plain_val_accuracy;
    if (cfg.epochs == 0) return result;
    cfg.validate();
    if (train_set.empty()) throw DataError("training set must be non-empty");

    nn::MlpModel shadow = folded;
    detail::Rng rng(cfg.seed);
    nn::Adam<float> adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    auto params = nn::parameter_views(shadow);
    nn::Gradients<float> grads;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(train_set.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Eigen::Index width = train_set.x.cols();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
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
            const float loss = qat_step(shadow, scales, xb, yb, grads);
            if (!std::isfinite(loss)) {
                throw NumericError("non-finite loss during quantization-aware fine-tuning at epoch " +
                                   std::to_string(epoch));
            }
            auto gviews = nn::gradient_views(grads);
            adam.step(params, gviews);
            loss_sum += static_cast<double>(loss) * static_cast<double>(rows);
        }

        const QuantModel candidate = quantize(shadow, scales);
        const auto scores = qpredict(candidate, val_set.x);
        Vector<double> p(val_set.size());
        for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = scores[static_cast<std::size_t>(i)];
        nn::EpochRecord rec{epoch, loss_sum / static_cast<double>(train_set.size()),
                            nn::bce_loss<double>(p, val_set.y.cast<double>()), nn::accuracy(scores, val_set.y), {}};
        result.history.epochs.push_back(rec);
        if (rec.val_accuracy > result.final_val_accuracy) {
            result.final_val_accuracy = rec.val_accuracy;
            result.model = candidate;
            result.shadow = shadow;
            result.history.best_epoch = epoch;
        }
    }
    return result;
}

}  // namespace canids::quant
