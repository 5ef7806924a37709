#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace canids::metrics {

/// Positive class is Attack.
struct ConfusionMatrix {
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tp = 0;

    std::uint64_t total() const { return tn + fp + fn + tp; }
    bool operator==(const ConfusionMatrix&) const = default;
};

/// An exact ratio; undefined when the denominator is zero.
struct Ratio {
    std::uint64_t num = 0;
    std::uint64_t den = 0;

    bool defined() const { return den != 0; }
    std::optional<double> fraction() const;
    std::optional<double> percent() const;
    /// Percentage rounded half away from zero to two decimals, computed in
    /// integer arithmetic (e.g. 9992 for 99.92%).
    std::optional<std::int64_t> percent_hundredths() const;
    /// "99.92", "100", "0.04" or "undefined".
    std::string display() const;
};

struct MetricsReport {
    ConfusionMatrix confusion;
    Ratio precision;
    Ratio recall;
    Ratio f1;
    Ratio fpr;
    Ratio fnr;
    std::optional<double> auc;
};

/// prediction = score >= threshold. Throws DataError on empty or mismatched input.
ConfusionMatrix confusion(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Throws DataError on an all-zero matrix.
MetricsReport derive_metrics(const ConfusionMatrix& cm);

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

struct RocCurve {
    std::vector<RocPoint> points;  // starts at (0,0), ends at (1,1)
    double auc = 0.0;
};

/// One ROC point per distinct score (ties form a single step), trapezoidal
/// AUC. Throws DataError unless both classes are present.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Confusion matrix, derived rates and AUC in one call.
MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

nlohmann::json to_json(const ConfusionMatrix& cm);
nlohmann::json to_json(const MetricsReport& report);

/// Aligned text table with Precision/Recall/F1/FPR/FNR columns (percent).
std::string format_table(std::span<const std::pair<std::string, MetricsReport>> rows);

}  // namespace canids::metrics
