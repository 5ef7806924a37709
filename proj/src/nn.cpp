#include "canids/nn.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace canids::nn {

void ModelSpec::validate() const {
    if (layer_units.size() < 2) throw ConfigError("model needs at least an input and an output layer");
    for (int u : layer_units) {
        if (u < 1) throw ConfigError("layer widths must be positive");
    }
    if (layer_units.back() != 1) throw ConfigError("output layer must have exactly one unit");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0,1)");
    if (!(bn_epsilon > 0.0)) throw ConfigError("batch-norm epsilon must be positive");
    if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw ConfigError("batch-norm momentum must lie in [0,1)");
}

template <typename T>
std::size_t BasicMlp<T>::dense_parameter_count() const {
    std::size_t n = 0;
    for (const auto& d : dense) n += static_cast<std::size_t>(d.weight.size() + d.bias.size());
    return n;
}

template <typename T>
std::size_t BasicMlp<T>::trainable_parameter_count() const {
    std::size_t n = dense_parameter_count();
    for (const auto& bn : norms) n += static_cast<std::size_t>(bn.gamma.size() + bn.beta.size());
    return n;
}

template <typename T>
void BasicMlp<T>::validate() const {
    spec.validate();
    if (dense.size() != spec.dense_layers()) throw ConfigError("dense layer count disagrees with spec");
    for (std::size_t l = 0; l < dense.size(); ++l) {
        const auto in = spec.layer_units[l];
        const auto out = spec.layer_units[l + 1];
        if (dense[l].weight.rows() != out || dense[l].weight.cols() != in || dense[l].bias.size() != out) {
            throw ConfigError("dense layer " + std::to_string(l) + " has the wrong shape");
        }
    }
    if (!norms.empty()) {
        if (norms.size() != spec.hidden_layers()) throw ConfigError("batch-norm count disagrees with spec");
        for (std::size_t l = 0; l < norms.size(); ++l) {
            const auto units = spec.layer_units[l + 1];
            const auto& n = norms[l];
            if (n.gamma.size() != units || n.beta.size() != units || n.running_mean.size() != units ||
                n.running_var.size() != units) {
                throw ConfigError("batch-norm layer " + std::to_string(l) + " has the wrong shape");
            }
            if ((n.running_var.array() < T(0)).any()) throw ConfigError("negative running variance");
        }
    }
}

MlpModel init_model(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    detail::Rng rng(seed);
    MlpModel model;
    model.spec = spec;
    for (std::size_t l = 0; l < spec.dense_layers(); ++l) {
        const int in = spec.layer_units[l];
        const int out = spec.layer_units[l + 1];
        const double limit = std::sqrt(6.0 / in);
        DenseLayer<float> d{Matrix<float>(out, in), Vector<float>::Zero(out)};
        for (Eigen::Index i = 0; i < d.weight.size(); ++i) {
            d.weight.data()[i] = static_cast<float>(rng.uniform(-limit, limit));
        }
        model.dense.push_back(std::move(d));
    }
    if (spec.batchnorm) {
        for (std::size_t l = 0; l < spec.hidden_layers(); ++l) {
            const int units = spec.layer_units[l + 1];
            model.norms.push_back({Vector<float>::Ones(units), Vector<float>::Zero(units),
                                   Vector<float>::Zero(units), Vector<float>::Ones(units)});
        }
    }
    return model;
}

template <typename T>
DropoutMasks<T> make_dropout_masks(const ModelSpec& spec, Eigen::Index batch, std::uint64_t seed) {
    DropoutMasks<T> masks;
    if (spec.dropout_rate <= 0.0) return masks;
    detail::Rng rng(seed);
    const T keep_scale = T(1) / T(1 - spec.dropout_rate);
    for (std::size_t l = 0; l < spec.hidden_layers(); ++l) {
        Matrix<T> m(batch, spec.layer_units[l + 1]);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = rng.uniform() < spec.dropout_rate ? T(0) : keep_scale;
        }
        masks.push_back(std::move(m));
    }
    return masks;
}

namespace {

// Everything the backward pass needs from one forward pass.
template <typename T>
struct Tape {
    std::vector<Matrix<T>> inputs;   // input of each dense layer
    std::vector<Matrix<T>> xhat;     // normalised pre-activations (BN layers)
    std::vector<Vector<T>> inv_std;  // 1/sqrt(var + eps) per BN layer
    std::vector<Matrix<T>> relu_in;  // pre-ReLU values
    Vector<T> logits;
};

template <typename T>
Vector<T> run_forward(const BasicMlp<T>& model, const Matrix<T>& x, Mode mode,
                      const DropoutMasks<T>* masks, Tape<T>* tape, BatchStatistics<T>* stats) {
    if (x.cols() != model.spec.input_width()) {
        throw DataError("input width " + std::to_string(x.cols()) + " does not match model input " +
                        std::to_string(model.spec.input_width()));
    }
    const bool drop = mode == Mode::Train && masks != nullptr && !masks->empty();
    const T eps = static_cast<T>(model.spec.bn_epsilon);
    const auto n = x.rows();

    Matrix<T> a = x;
    const std::size_t hidden = model.spec.hidden_layers();
    for (std::size_t l = 0; l < hidden; ++l) {
        const auto& d = model.dense[l];
        if (tape) tape->inputs.push_back(a);
        Matrix<T> z = a * d.weight.transpose();
        z.rowwise() += d.bias.transpose();

        if (model.has_batchnorm()) {
            const auto& bn = model.norms[l];
            Vector<T> mean, var;
            if (mode == Mode::Train) {
                mean = z.colwise().mean().transpose();
                var = (z.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
                if (stats) {
                    stats->mean.push_back(mean);
                    stats->var.push_back(var);
                }
            } else {
                mean = bn.running_mean;
                var = bn.running_var;
            }
            const Vector<T> inv_std = (var.array() + eps).rsqrt().matrix();
            Matrix<T> xhat = (z.rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose().array();
            z = (xhat.array().rowwise() * bn.gamma.transpose().array()).matrix();
            z.rowwise() += bn.beta.transpose();
            if (tape) {
                tape->xhat.push_back(std::move(xhat));
                tape->inv_std.push_back(inv_std);
            }
        }
        if (tape) tape->relu_in.push_back(z);
        a = z.cwiseMax(T(0));
        if (drop) a = a.cwiseProduct((*masks)[l]);
        (void)n;
    }
    if (tape) tape->inputs.push_back(a);
    const auto& last = model.dense.back();
    Vector<T> logits = a * last.weight.transpose().col(0);
    logits.array() += last.bias(0);
    if (tape) tape->logits = logits;
    return logits;
}

template <typename T>
Vector<T> logistic(const Vector<T>& logits) {
    return logits.unaryExpr([](T z) { return sigmoid(z); });
}

}  // namespace

template <typename T>
Vector<T> forward_batch(const BasicMlp<T>& model, const Matrix<T>& x, Mode mode, const DropoutMasks<T>* masks) {
    return logistic<T>(run_forward<T>(model, x, mode, masks, nullptr, nullptr));
}

double forward(const MlpModel& model, std::span<const float> x, Mode mode, std::uint64_t seed) {
    const auto width = static_cast<Eigen::Index>(x.size());
    Matrix<float> row = Eigen::Map<const Matrix<float>>(x.data(), 1, width);
    DropoutMasks<float> masks;
    if (mode == Mode::Train) masks = make_dropout_masks<float>(model.spec, 1, seed);
    return forward_batch(model, row, mode, &masks)(0);
}

template <typename T>
T bce_loss(const Vector<T>& p, const Vector<T>& y) {
    const T lo = static_cast<T>(kProbabilityClamp);
    const T hi = T(1) - lo;
    T total = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const T q = std::clamp(p(i), lo, hi);
        total -= y(i) * std::log(q) + (T(1) - y(i)) * std::log(T(1) - q);
    }
    return total / static_cast<T>(p.size());
}

template <typename T>
T loss_and_gradients(const BasicMlp<T>& model, const Matrix<T>& x, const Vector<T>& y, Mode mode,
                     const DropoutMasks<T>* masks, Gradients<T>& grads, BatchStatistics<T>* stats) {
    if (y.size() != x.rows()) throw DataError("label count does not match batch size");
    Tape<T> tape;
    const Vector<T> p = logistic<T>(run_forward<T>(model, x, mode, masks, &tape, stats));
    const T loss = bce_loss<T>(p, y);
    const auto n = static_cast<T>(x.rows());
    const bool drop = mode == Mode::Train && masks != nullptr && !masks->empty();
    const std::size_t layers = model.dense.size();

    grads.dense.resize(layers);
    grads.gamma.resize(model.norms.size());
    grads.beta.resize(model.norms.size());

    // d(loss)/d(logit) = (p - y) / n for sigmoid + cross-entropy.
    Matrix<T> delta = ((p - y) / n);
    {
        const Matrix<T>& in = tape.inputs[layers - 1];
        grads.dense[layers - 1].weight = delta.transpose() * in;
        grads.dense[layers - 1].bias = delta.colwise().sum().transpose();
        delta = delta * model.dense[layers - 1].weight;
    }
    for (std::size_t li = layers - 1; li-- > 0;) {
        if (drop) delta = delta.cwiseProduct((*masks)[li]);
        delta = (tape.relu_in[li].array() > T(0)).select(delta, T(0));
        if (model.has_batchnorm()) {
            const auto& bn = model.norms[li];
            const Matrix<T>& xhat = tape.xhat[li];
            grads.gamma[li] = (delta.cwiseProduct(xhat)).colwise().sum().transpose();
            grads.beta[li] = delta.colwise().sum().transpose();
            Matrix<T> dxhat = delta.array().rowwise() * bn.gamma.transpose().array();
            if (mode == Mode::Train) {
                const auto rows = static_cast<T>(x.rows());
                const Eigen::Matrix<T, 1, Eigen::Dynamic> sum_d = dxhat.colwise().sum();
                const Eigen::Matrix<T, 1, Eigen::Dynamic> sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
                Matrix<T> centered = (dxhat * rows).rowwise() - sum_d;
                centered -= (xhat.array().rowwise() * sum_dx.array()).matrix();
                delta = (centered.array().rowwise() * (tape.inv_std[li].transpose().array() / rows)).matrix();
            } else {
                delta = (dxhat.array().rowwise() * tape.inv_std[li].transpose().array()).matrix();
            }
        }
        const Matrix<T>& in = tape.inputs[li];
        grads.dense[li].weight = delta.transpose() * in;
        grads.dense[li].bias = delta.colwise().sum().transpose();
        if (li > 0) delta = delta * model.dense[li].weight;
    }
    return loss;
}

template <typename T>
std::vector<std::span<T>> parameter_views(BasicMlp<T>& model) {
    std::vector<std::span<T>> views;
    for (auto& d : model.dense) {
        views.emplace_back(d.weight.data(), static_cast<std::size_t>(d.weight.size()));
        views.emplace_back(d.bias.data(), static_cast<std::size_t>(d.bias.size()));
    }
    for (auto& bn : model.norms) {
        views.emplace_back(bn.gamma.data(), static_cast<std::size_t>(bn.gamma.size()));
        views.emplace_back(bn.beta.data(), static_cast<std::size_t>(bn.beta.size()));
    }
    return views;
}

template <typename T>
std::vector<std::span<T>> gradient_views(Gradients<T>& grads) {
    std::vector<std::span<T>> views;
    for (auto& d : grads.dense) {
        views.emplace_back(d.weight.data(), static_cast<std::size_t>(d.weight.size()));
        views.emplace_back(d.bias.data(), static_cast<std::size_t>(d.bias.size()));
    }
    for (std::size_t i = 0; i < grads.gamma.size(); ++i) {
        views.emplace_back(grads.gamma[i].data(), static_cast<std::size_t>(grads.gamma[i].size()));
        views.emplace_back(grads.beta[i].data(), static_cast<std::size_t>(grads.beta[i].size()));
    }
    return views;
}

template <typename T>
BasicMlp<T> fold_batchnorm(const BasicMlp<T>& model) {
    BasicMlp<T> out;
    out.spec = model.spec;
    out.spec.batchnorm = false;
    out.dense = model.dense;
    if (!model.has_batchnorm()) return out;
    for (std::size_t l = 0; l < model.norms.size(); ++l) {
        const auto& bn = model.norms[l];
        auto& d = out.dense[l];
        for (Eigen::Index j = 0; j < d.weight.rows(); ++j) {
            const double s = static_cast<double>(bn.gamma(j)) /
                             std::sqrt(static_cast<double>(bn.running_var(j)) + model.spec.bn_epsilon);
            d.weight.row(j) = (d.weight.row(j).template cast<double>() * s).template cast<T>();
            d.bias(j) = static_cast<T>(s * (static_cast<double>(model.dense[l].bias(j)) -
                                             static_cast<double>(bn.running_mean(j))) +
                                       static_cast<double>(bn.beta(j)));
        }
    }
    return out;
}

template struct BasicMlp<float>;
template struct BasicMlp<double>;
template DropoutMasks<float> make_dropout_masks<float>(const ModelSpec&, Eigen::Index, std::uint64_t);
template DropoutMasks<double> make_dropout_masks<double>(const ModelSpec&, Eigen::Index, std::uint64_t);
template Vector<float> forward_batch(const BasicMlp<float>&, const Matrix<float>&, Mode, const DropoutMasks<float>*);
template Vector<double> forward_batch(const BasicMlp<double>&, const Matrix<double>&, Mode,
                                      const DropoutMasks<double>*);
template float bce_loss(const Vector<float>&, const Vector<float>&);
template double bce_loss(const Vector<double>&, const Vector<double>&);
template float loss_and_gradients(const BasicMlp<float>&, const Matrix<float>&, const Vector<float>&, Mode,
                                  const DropoutMasks<float>*, Gradients<float>&, BatchStatistics<float>*);
template double loss_and_gradients(const BasicMlp<double>&, const Matrix<double>&, const Vector<double>&, Mode,
                                   const DropoutMasks<double>*, Gradients<double>&, BatchStatistics<double>*);
template std::vector<std::span<float>> parameter_views(BasicMlp<float>&);
template std::vector<std::span<double>> parameter_views(BasicMlp<double>&);
template std::vector<std::span<float>> gradient_views(Gradients<float>&);
template std::vector<std::span<double>> gradient_views(Gradients<double>&);
template BasicMlp<float> fold_batchnorm(const BasicMlp<float>&);
template BasicMlp<double> fold_batchnorm(const BasicMlp<double>&);

}  // namespace canids::nn
