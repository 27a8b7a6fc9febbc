#ifndef PFTADB_EVAL_HPP
#define PFTADB_EVAL_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pftadb/error.hpp"

namespace pftadb {

/// counts[gold][pred]
using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

inline ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> golds, std::size_t num_classes) {
    if (preds.size() != golds.size()) throw DimensionError("prediction and gold counts differ");
    ConfusionMatrix m(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        for (int label : {preds[i], golds[i]}) {
            if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
                throw LabelError("label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes) + ")");
            }
        }
        ++m[static_cast<std::size_t>(golds[i])][static_cast<std::size_t>(preds[i])];
    }
    return m;
}

struct ClassMetrics {
    std::string label;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

/// (N+1)-class report. The last class is the open class.
struct MetricsReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double open_f1 = 0.0;
    double known_macro_f1 = 0.0;
    std::vector<ClassMetrics> per_class;
    ConfusionMatrix confusion;

    std::size_t num_known() const { return per_class.empty() ? 0 : per_class.size() - 1; }
    bool open_unsupported() const { return !per_class.empty() && per_class.back().support == 0; }
};

/// Per-class P/R/F1 (0 whenever a denominator vanishes), accuracy, and macro
/// F1 over all classes, over the known classes, and for the open class alone.
inline MetricsReport compute_metrics(const ConfusionMatrix& m, const std::vector<std::string>& labels = {}) {
    const std::size_t c = m.size();
    if (c < 2) throw DimensionError("metrics need at least one known class plus the open class");
    for (const auto& row : m)
        if (row.size() != c) throw DimensionError("confusion matrix is not square");
    if (!labels.empty() && labels.size() != c) throw DimensionError("label name count differs from class count");

    std::size_t total = 0, correct = 0;
    std::vector<std::size_t> gold(c, 0), predicted(c, 0);
    for (std::size_t g = 0; g < c; ++g) {
        for (std::size_t p = 0; p < c; ++p) {
            total += m[g][p];
            gold[g] += m[g][p];
            predicted[p] += m[g][p];
        }
        correct += m[g][g];
    }
    if (total == 0) throw DataError("metrics over an empty prediction set");

    MetricsReport r;
    r.confusion = m;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    double known_sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        ClassMetrics cm;
        cm.label = labels.empty() ? (k + 1 == c ? std::string("OPEN") : std::to_string(k)) : labels[k];
        cm.support = gold[k];
        const double tp = static_cast<double>(m[k][k]);
        cm.precision = predicted[k] ? tp / static_cast<double>(predicted[k]) : 0.0;
        cm.recall = gold[k] ? tp / static_cast<double>(gold[k]) : 0.0;
        cm.f1 = cm.precision + cm.recall > 0.0 ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
        if (k + 1 < c) known_sum += cm.f1;
        r.per_class.push_back(cm);
    }
    r.open_f1 = r.per_class.back().f1;
    r.known_macro_f1 = known_sum / static_cast<double>(c - 1);
    r.macro_f1 = (known_sum + r.open_f1) / static_cast<double>(c);
    return r;
}

/// Keys: accuracy, macro_f1, open_f1, known_macro_f1, per_class, confusion.
inline nlohmann::ordered_json metrics_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["accuracy"] = r.accuracy;
    j["macro_f1"] = r.macro_f1;
    j["open_f1"] = r.open_f1;
    j["known_macro_f1"] = r.known_macro_f1;
    auto& per = j["per_class"] = nlohmann::ordered_json::array();
    for (const auto& c : r.per_class) {
        per.push_back({{"label", c.label}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1},
                       {"support", c.support}});
    }
    j["confusion"] = r.confusion;
    return j;
}

}  // namespace pftadb

#endif  // PFTADB_EVAL_HPP
