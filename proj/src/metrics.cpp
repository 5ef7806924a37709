#include "canids/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>

#include "canids/error.hpp"

namespace canids::metrics {

std::optional<double> Ratio::fraction() const {
    if (!defined()) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> Ratio::percent() const {
    if (!defined()) return std::nullopt;
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

std::optional<std::int64_t> Ratio::percent_hundredths() const {
    if (!defined()) return std::nullopt;
    // round(10000 * num / den), halves away from zero; all values are >= 0.
    const unsigned __int128 scaled = static_cast<unsigned __int128>(num) * 20000u + den;
    return static_cast<std::int64_t>(scaled / (static_cast<unsigned __int128>(den) * 2u));
}

std::string Ratio::display() const {
    const auto h = percent_hundredths();
    if (!h) return "undefined";
    char buf[32];
    if (*h % 100 == 0) {
        std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(*h / 100));
    } else {
        std::snprintf(buf, sizeof buf, "%lld.%02lld", static_cast<long long>(*h / 100),
                      static_cast<long long>(*h % 100));
    }
    return buf;
}

ConfusionMatrix confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
    if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
    if (scores.empty()) throw DataError("cannot build a confusion matrix from no predictions");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        const bool actual = labels[i] != 0;
        if (actual) {
            ++(predicted ? cm.tp : cm.fn);
        } else {
            ++(predicted ? cm.fp : cm.tn);
        }
    }
    return cm;
}

MetricsReport derive_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw DataError("confusion matrix is empty");
    MetricsReport r;
    r.confusion = cm;
    r.precision = {cm.tp, cm.tp + cm.fp};
    r.recall = {cm.tp, cm.tp + cm.fn};
    if (r.precision.defined() && r.recall.defined()) {
        // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn).
        r.f1 = {2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn};
    }
    r.fpr = {cm.fp, cm.fp + cm.tn};
    r.fnr = {cm.fn, cm.fn + cm.tp};
    return r;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
    std::uint64_t positives = 0;
    for (int l : labels) positives += l != 0 ? 1 : 0;
    const std::uint64_t negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) throw DataError("ROC needs both classes present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::uint64_t tp = 0, fp = 0;
    long double area = 0;  // in units of (one negative) x (one positive)
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        const std::uint64_t tp0 = tp, fp0 = fp;
        for (; i < order.size() && scores[order[i]] == s; ++i) {
            ++(labels[order[i]] != 0 ? tp : fp);
        }
        area += static_cast<long double>(fp - fp0) * static_cast<long double>(tp + tp0) / 2;
        curve.points.push_back({s, static_cast<double>(fp) / static_cast<double>(negatives),
                                static_cast<double>(tp) / static_cast<double>(positives)});
    }
    curve.auc = static_cast<double>(area / (static_cast<long double>(positives) * static_cast<long double>(negatives)));
    return curve;
}

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold) {
    MetricsReport r = derive_metrics(confusion(scores, labels, threshold));
    std::uint64_t positives = 0;
    for (int l : labels) positives += l != 0 ? 1 : 0;
    if (positives > 0 && positives < labels.size()) r.auc = roc_auc(scores, labels).auc;
    return r;
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
    return {{"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}, {"tp", cm.tp}};
}

namespace {

nlohmann::json ratio_json(const Ratio& r) {
    if (!r.defined()) return {{"value", nullptr}, {"display", r.display()}, {"num", r.num}, {"den", r.den}};
    return {{"value", *r.percent()}, {"display", r.display()}, {"num", r.num}, {"den", r.den}};
}

}  // namespace

nlohmann::json to_json(const MetricsReport& report) {
    nlohmann::json j = {{"confusion", to_json(report.confusion)},
                        {"precision", ratio_json(report.precision)},
                        {"recall", ratio_json(report.recall)},
                        {"f1", ratio_json(report.f1)},
                        {"fpr", ratio_json(report.fpr)},
                        {"fnr", ratio_json(report.fnr)},
                        {"unit", "percent"}};
    j["auc"] = report.auc ? nlohmann::json(*report.auc) : nlohmann::json(nullptr);
    return j;
}

std::string format_table(std::span<const std::pair<std::string, MetricsReport>> rows) {
    std::size_t name_width = 5;
    for (const auto& [name, _] : rows) name_width = std::max(name_width, name.size());
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %10s  %10s  %10s  %8s  %8s  %8s\n", static_cast<int>(name_width), "Model",
                  "Precision", "Recall", "F1", "FPR", "FNR", "AUC");
    out += buf;
    for (const auto& [name, r] : rows) {
        char auc[32] = "-";
        if (r.auc) std::snprintf(auc, sizeof auc, "%.4f", *r.auc);
        std::snprintf(buf, sizeof buf, "%-*s  %10s  %10s  %10s  %8s  %8s  %8s\n", static_cast<int>(name_width),
                      name.c_str(), r.precision.display().c_str(), r.recall.display().c_str(), r.f1.display().c_str(),
                      r.fpr.display().c_str(), r.fnr.display().c_str(), auc);
        out += buf;
    }
    return out;
}

}  // namespace canids::metrics
