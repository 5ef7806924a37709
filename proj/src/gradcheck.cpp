#include <algorithm>
#include <cmath>

#include "canids/nn.hpp"

namespace canids::nn {

GradientCheckResult gradient_check(const BasicMlp<double>& model, const Matrix<double>& x, const Vector<double>& y,
                                   Mode mode, const DropoutMasks<double>* masks, double step, double floor) {
    Gradients<double> grads;
    loss_and_gradients(model, x, y, mode, masks, grads);
    const auto analytic = gradient_views(grads);

    BasicMlp<double> probe = model;
    auto params = parameter_views(probe);
    auto loss_at = [&] { return bce_loss<double>(forward_batch(probe, x, mode, masks), y); };

    GradientCheckResult result;
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            const double saved = params[t][i];
            params[t][i] = saved + step;
            const double up = loss_at();
            params[t][i] = saved - step;
            const double down = loss_at();
            params[t][i] = saved;

            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[t][i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            ++result.parameters_checked;
            if (rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst_tensor = t;
                result.worst_index = i;
                result.worst_analytic = a;
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace canids::nn
