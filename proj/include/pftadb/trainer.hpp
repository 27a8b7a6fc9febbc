#ifndef PFTADB_TRAINER_HPP
#define PFTADB_TRAINER_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "pftadb/autodiff.hpp"
#include "pftadb/data.hpp"
#include "pftadb/error.hpp"
#include "pftadb/head.hpp"
#include "pftadb/model.hpp"
#include "pftadb/optim.hpp"
#include "pftadb/rng.hpp"

namespace pftadb {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 30;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
    /// Check after every step that frozen parameters are bitwise unchanged.
    bool verify_frozen = false;

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
            throw ConfigError("learning_rate must be finite and non-negative");
        }
        if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    }

    /// Fine-tuning rate for a pretrained encoder.
    static TrainConfig reference() {
        TrainConfig c;
        c.learning_rate = 2e-5;
        return c;
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double dev_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_dev_accuracy = 0.0;
    std::size_t steps = 0;
};

/// Fraction of examples whose arg-max logit equals the label.
inline double accuracy(Model& model, const std::vector<EncodedExample>& examples) {
    if (examples.empty()) return 0.0;
    std::size_t correct = 0;
    constexpr std::size_t chunk = 64;
    for (std::size_t start = 0; start < examples.size(); start += chunk) {
        const std::size_t end = std::min(examples.size(), start + chunk);
        std::vector<TokenSequence> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back(examples[i].tokens);
        Graph g(false);
        const Tensor& logits = model.batch_logits(g, batch).value();
        for (std::size_t i = start; i < end; ++i) {
            if (static_cast<int>(argmax(logits.row(i - start))) == examples[i].label) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

/// Supervised pre-training on known intents.
///
/// Applies `plan`, then runs shuffled mini-batch Adam over the trainable set.
/// The parameters with the best dev accuracy are restored at the end (train
/// accuracy stands in when there is no dev set). Training stops after
/// `patience` epochs without improvement.
inline TrainResult train(Model& model, const std::vector<EncodedExample>& train_set,
                         const std::vector<EncodedExample>& dev_set, const TuningPlan& plan, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw DataError("empty training set");
    for (const auto& ex : train_set) {
        if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= model.num_classes()) {
            throw LabelError("training label " + std::to_string(ex.label) + " is not a known class");
        }
    }
    model.apply_plan(plan);
    const std::vector<Parameter*> trainable = model.trainable_parameters();

    std::vector<std::pair<Parameter*, Tensor>> frozen;
    if (cfg.verify_frozen) {
        for (Parameter* p : model.parameters())
            if (!p->trainable) frozen.emplace_back(p, p->value);
    }

    Adam adam;
    Rng shuffle_rng(derive_seed(cfg.seed, 7));
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const auto& select_set = dev_set.empty() ? train_set : dev_set;
    TrainResult result;
    result.best_dev_accuracy = -1.0;
    std::vector<Tensor> best = model.snapshot();
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<TokenSequence> batch;
            std::vector<int> labels;
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train_set[order[i]].tokens);
                labels.push_back(train_set[order[i]].label);
            }
            for (Parameter* p : trainable) p->zero_grad();
            double loss_value = 0.0;
            try {
                Graph g(true);
                const Var loss = softmax_loss(model.batch_logits(g, batch), labels);
                loss_value = loss.value()[0];
                g.backward(loss);
            } catch (const NumericError& e) {
                throw DivergenceError(epoch, e.what());
            }
            loss_sum += loss_value * static_cast<double>(end - start);
            if (!trainable.empty()) {
                adam.step(trainable, cfg.learning_rate);
                ++result.steps;
                for (Parameter* p : trainable) {
                    if (!p->value.all_finite()) throw DivergenceError(epoch, "non-finite parameter " + p->name);
                }
            }
            for (const auto& [p, before] : frozen) {
                if (p->value != before) throw Error("frozen parameter changed during training: " + p->name);
            }
        }
        const double train_loss = loss_sum / static_cast<double>(order.size());
        if (!std::isfinite(train_loss)) throw DivergenceError(epoch, "non-finite training loss");
        const double dev_acc = accuracy(model, select_set);
        result.history.push_back({epoch, train_loss, dev_acc});
        if (dev_acc > result.best_dev_accuracy) {
            result.best_dev_accuracy = dev_acc;
            result.best_epoch = epoch;
            best = model.snapshot();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    model.restore(best);
    return result;
}

/// epoch,train_loss,dev_acc
inline void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "epoch,train_loss,dev_acc\n";
    for (const auto& r : history) {
        out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.dev_accuracy) << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace pftadb

#endif  // PFTADB_TRAINER_HPP
