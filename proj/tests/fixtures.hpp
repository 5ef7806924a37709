#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "canids/nn.hpp"
#include "canids/quant.hpp"

namespace canids::fixtures {

using namespace canids::nn;
using namespace canids::quant;

inline BasicMlp<double> random_model(const ModelSpec& spec, std::mt19937_64& gen, bool random_bn = true) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    BasicMlp<double> m = init_model(spec, gen()).cast<double>();
    for (auto& d : m.dense) d.bias = d.bias.unaryExpr([&](double) { return 0.3 * u(gen); });
    if (random_bn) {
        for (auto& bn : m.norms) {
            for (Eigen::Index i = 0; i < bn.gamma.size(); ++i) {
                bn.gamma(i) = 0.5 + std::abs(u(gen));
                bn.beta(i) = 0.5 * u(gen);
                bn.running_mean(i) = 0.5 * u(gen);
                bn.running_var(i) = 0.2 + std::abs(u(gen));
            }
        }
    }
    return m;
}

inline Matrix<double> random_batch(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix<double> x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(gen);
    return x;
}

// Random model whose running statistics sit near the real pre-activation
// statistics of `x`, as after training: mean within half a standard
// deviation, variance within a factor of two.
inline BasicMlp<double> data_consistent_model(const ModelSpec& spec, const Matrix<double>& x, std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    BasicMlp<double> m = random_model(spec, gen);
    Matrix<double> a = x;
    for (std::size_t l = 0; l < m.norms.size(); ++l) {
        Matrix<double> z = a * m.dense[l].weight.transpose();
        z.rowwise() += m.dense[l].bias.transpose();
        auto& bn = m.norms[l];
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            const double mean = z.col(j).mean();
            const double var = (z.col(j).array() - mean).square().mean() + 1e-6;
            bn.running_mean(j) = mean + 0.5 * std::sqrt(var) * u(gen);
            bn.running_var(j) = var * std::exp2(u(gen));
        }
        const Vector<double> scale = (bn.gamma.array() / (bn.running_var.array() + spec.bn_epsilon).sqrt()).matrix();
        Matrix<double> h = (z.rowwise() - bn.running_mean.transpose()) * scale.asDiagonal();
        h.rowwise() += bn.beta.transpose();
        a = h.cwiseMax(0.0);
    }
    return m;
}

/// Rows of byte-valued features in [-128, 127].
inline Matrix<double> random_bytes(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen) {
    std::uniform_int_distribution<int> d(-128, 127);
    Matrix<double> x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = d(gen);
    return x;
}

using i128 = __int128;

// Exact value of acc * 2^shift rounded half to even, by integer division.
inline i128 oracle_rescale(i128 acc, int shift) {
    if (shift >= 0) return acc * (i128{1} << shift);
    const i128 den = i128{1} << (-shift);
    i128 q = acc / den;
    if (acc % den != 0 && acc < 0) q -= 1;
    const i128 rem = acc - q * den;  // 0 <= rem < den
    if (2 * rem > den) return q + 1;
    if (2 * rem < den) return q;
    return (q % 2 == 0) ? q : q + 1;
}

// Brute-force integer network: every hidden output as int8, final accumulator.
struct OracleRun {
    std::vector<std::vector<std::int8_t>> hidden;
    i128 logit_acc = 0;
};

inline OracleRun oracle_forward(const QuantModel& m, const std::vector<std::int8_t>& x) {
    OracleRun run;
    std::vector<std::int8_t> cur = x;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& layer = m.layers[l];
        std::vector<i128> acc(static_cast<std::size_t>(layer.out));
        for (int o = 0; o < layer.out; ++o) {
            i128 s = layer.bias[static_cast<std::size_t>(o)];
            for (int i = 0; i < layer.in; ++i) {
                s += i128{layer.weight[static_cast<std::size_t>(o * layer.in + i)]} * i128{cur[static_cast<std::size_t>(i)]};
            }
            acc[static_cast<std::size_t>(o)] = s;
        }
        if (l + 1 == m.layers.size()) {
            run.logit_acc = acc[0];
            break;
        }
        const int shift = layer.scales.output.fraction_bits - layer.scales.input.fraction_bits -
                          layer.scales.weight.fraction_bits;
        std::vector<std::int8_t> next;
        for (auto a : acc) {
            i128 v = oracle_rescale(a, shift);
            if (v > 127) v = 127;
            if (v < -128) v = -128;
            if (v < 0) v = 0;
            next.push_back(static_cast<std::int8_t>(v));
        }
        run.hidden.push_back(next);
        cur = next;
    }
    return run;
}

inline QuantLayer random_layer(std::mt19937_64& gen, int in, int out, int fin, int fw, int fout, int bias_range) {
    std::uniform_int_distribution<int> w(-128, 127);
    std::uniform_int_distribution<int> b(-bias_range, bias_range);
    QuantLayer q;
    q.in = in;
    q.out = out;
    q.scales = {{fin}, {fw}, {fout}};
    for (int i = 0; i < in * out; ++i) q.weight.push_back(static_cast<std::int8_t>(w(gen)));
    for (int o = 0; o < out; ++o) q.bias.push_back(b(gen));
    return q;
}

// Appends a one-hot readout of hidden unit `unit`, so the final accumulator
// equals that unit's int8 output.
inline QuantModel with_readout(QuantModel m, int unit) {
    const auto& prev = m.layers.back();
    QuantLayer r;
    r.in = prev.out;
    r.out = 1;
    r.scales = {prev.scales.output, {0}, {prev.scales.output.fraction_bits}};
    r.weight.assign(static_cast<std::size_t>(r.in), 0);
    r.weight[static_cast<std::size_t>(unit)] = 1;
    r.bias = {0};
    m.layers.push_back(r);
    return m;
}

inline std::vector<std::int8_t> random_input(std::mt19937_64& gen, int n) {
    std::uniform_int_distribution<int> d(-128, 127);
    std::vector<std::int8_t> x;
    for (int i = 0; i < n; ++i) x.push_back(static_cast<std::int8_t>(d(gen)));
    return x;
}

}  // namespace canids::fixtures
