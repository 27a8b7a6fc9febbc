#ifndef PFTADB_HEAD_HPP
#define PFTADB_HEAD_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pftadb/autodiff.hpp"
#include "pftadb/encoder.hpp"
#include "pftadb/error.hpp"
#include "pftadb/ops.hpp"
#include "pftadb/rng.hpp"
#include "pftadb/tensor.hpp"

namespace pftadb {

/// Pooled, densely projected utterance vector shared by the classifier and ADB.
struct IntentRepresentation {
    std::string id;
    int label = -1;
    std::vector<double> features;
};

/// Dense projection d -> feature_dim (ReLU) and linear classifier feature_dim -> K.
struct HeadParams {
    Parameter dense_w;
    Parameter dense_b;
    Parameter classifier_w;
    Parameter classifier_b;

    std::size_t num_classes() const { return classifier_b.value.size(); }

    std::vector<Parameter*> parameters() { return {&dense_w, &dense_b, &classifier_w, &classifier_b}; }

    static HeadParams init(const EncoderConfig& cfg, std::size_t num_classes, Rng& rng) {
        if (num_classes == 0) throw ConfigError("head needs at least one known class");
        auto xavier = [&rng](std::size_t in, std::size_t out) {
            Tensor t({in, out});
            const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
            for (double& v : t.data()) v = rng.uniform(-bound, bound);
            return t;
        };
        HeadParams h;
        h.dense_w = Parameter("head.dense.W", xavier(cfg.hidden_dim, cfg.feature_dim));
        h.dense_b = Parameter("head.dense.b", Tensor({cfg.feature_dim}));
        h.classifier_w = Parameter("head.classifier.W", xavier(cfg.feature_dim, num_classes));
        h.classifier_b = Parameter("head.classifier.b", Tensor({num_classes}));
        return h;
    }
};

/// Mean over unmasked positions, classification token included.
inline Var mean_pool(Var hidden, std::span<const std::uint8_t> mask) { return masked_mean_rows(hidden, mask); }

inline Tensor mean_pool(const Tensor& hidden, std::span<const std::uint8_t> mask) {
    Graph g(false);
    return mean_pool(g.constant(hidden), mask).value();
}

/// relu(W_d * pooled + b_d) for one pooled vector (rank 1) or a batch of rows.
inline Var dense_features(Graph& g, Var pooled, HeadParams& head) {
    return relu(add_row(matmul(pooled, g.parameter(head.dense_w)), g.parameter(head.dense_b)));
}

inline Var classify(Graph& g, Var features, HeadParams& head) {
    return add_row(matmul(features, g.parameter(head.classifier_w)), g.parameter(head.classifier_b));
}

/// Mean over the batch of -log softmax(z)[label].
inline Var softmax_loss(Var logits, std::span<const int> labels) { return softmax_cross_entropy(logits, labels); }

inline double softmax_loss(const Tensor& logits, std::span<const int> labels) {
    Graph g(false);
    return softmax_loss(g.constant(logits), labels).value()[0];
}

inline std::size_t argmax(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

}  // namespace pftadb

#endif  // PFTADB_HEAD_HPP
