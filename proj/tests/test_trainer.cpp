#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pftadb/trainer.hpp"

using namespace pftadb;

namespace {

EncoderConfig tiny() { return EncoderConfig{1, 8, 2, 16, 8, 6, 8, 1e-12}; }

// Class 0 sentences carry token 3, class 1 sentences token 4.
std::vector<EncodedExample> separable(std::size_t per_class, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<EncodedExample> out;
    for (std::size_t i = 0; i < per_class; ++i) {
        for (int label : {0, 1}) {
            TokenSequence t{{1}, {1}};
            const std::size_t len = 2 + rng.index(3);
            for (std::size_t j = 1; j < len; ++j) t.ids.push_back(5 + rng.index(3));
            t.ids[1 + rng.index(len - 1)] = label == 0 ? 3 : 4;
            t.mask.assign(t.ids.size(), 1);
            out.push_back({"u" + std::to_string(out.size()), t, label});
        }
    }
    return out;
}

TrainConfig quick(std::size_t epochs = 5) {
    TrainConfig c;
    c.learning_rate = 1e-2;
    c.batch_size = 4;
    c.max_epochs = epochs;
    c.patience = epochs;
    return c;
}

}  // namespace

TEST(Train, SeparableToySetReachesFullAccuracy) {
    Model m = Model::init(tiny(), PrefixConfig{2, PrefixMode::Mlp, 16}, 2, 1);
    const auto data = separable(10, 2);
    TrainConfig cfg = quick(50);
    const TrainResult r = train(m, data, {}, parse_plan("fft+prefix", 1).plan, cfg);
    EXPECT_LE(r.history.size(), 50u);
    EXPECT_DOUBLE_EQ(accuracy(m, data), 1.0);
    EXPECT_DOUBLE_EQ(r.best_dev_accuracy, 1.0);
}

TEST(Train, ZeroLearningRateLeavesParameters) {
    Model m = Model::init(tiny(), PrefixConfig{2, PrefixMode::Embed, 16}, 2, 1);
    const auto before = m.snapshot();
    TrainConfig cfg = quick(3);
    cfg.learning_rate = 0.0;
    const TrainResult r = train(m, separable(4, 1), {}, parse_plan("fft+prefix", 1).plan, cfg);
    EXPECT_EQ(m.snapshot(), before);
    for (const auto& e : r.history) EXPECT_NEAR(e.train_loss, r.history.front().train_loss, 1e-12);
}

TEST(Train, FrozenPlanKeepsLossConstant) {
    Model m = Model::init(tiny(), PrefixConfig{2, PrefixMode::Embed, 16}, 2, 1);
    const auto before = m.snapshot();
    const TrainResult r = train(m, separable(4, 1), {}, TuningPlan::frozen(1), quick(4));
    EXPECT_EQ(r.steps, 0u);
    EXPECT_EQ(m.snapshot(), before);
    ASSERT_EQ(r.history.size(), 4u);
    for (const auto& e : r.history) EXPECT_NEAR(e.train_loss, r.history.front().train_loss, 1e-12);
}

TEST(Train, OnlyPlannedParametersMove) {
    const EncoderConfig enc{2, 8, 2, 16, 8, 6, 8, 1e-12};
    for (const char* desc : {"prefix-only", "prefix+just:2", "component:kv", "prefix+just:1"}) {
        Model m = Model::init(enc, PrefixConfig{2, PrefixMode::Mlp, 16}, 2, 3);
        const TuningPlan plan = parse_plan(desc, 2).plan;
        m.apply_plan(plan);
        std::vector<std::pair<Parameter*, Tensor>> frozen, trainable;
        for (Parameter* p : m.parameters()) (p->trainable ? trainable : frozen).emplace_back(p, p->value);
        TrainConfig cfg = quick(3);
        cfg.verify_frozen = true;
        train(m, separable(6, 4), {}, plan, cfg);
        for (const auto& [p, v] : frozen) EXPECT_EQ(p->value, v) << desc << " " << p->name;
        bool moved = false;
        for (const auto& [p, v] : trainable) moved = moved || p->value != v;
        EXPECT_TRUE(moved) << desc;
    }
}

TEST(Train, RestoresBestDevSnapshot) {
    Model m = Model::init(tiny(), PrefixConfig{2, PrefixMode::Embed, 16}, 2, 1);
    const auto train_set = separable(8, 5), dev = separable(4, 6);
    const TrainResult r = train(m, train_set, dev, parse_plan("fft+prefix", 1).plan, quick(12));
    double best = -1.0;
    for (const auto& e : r.history) best = std::max(best, e.dev_accuracy);
    EXPECT_DOUBLE_EQ(r.best_dev_accuracy, best);
    EXPECT_DOUBLE_EQ(accuracy(m, dev), best);
}

TEST(Train, EarlyStopsAfterPatience) {
    Model m = Model::init(tiny(), PrefixConfig{2, PrefixMode::Embed, 16}, 2, 1);
    TrainConfig cfg = quick(40);
    cfg.patience = 2;
    const TrainResult r = train(m, separable(4, 1), {}, TuningPlan::frozen(1), cfg);
    EXPECT_EQ(r.history.size(), 3u);  // epoch 1 sets the best, two more without improvement
}

TEST(Train, IsDeterministic) {
    auto run = [] {
        Model m = Model::init(tiny(), PrefixConfig{2, PrefixMode::Mlp, 16}, 2, 7);
        const TrainResult r = train(m, separable(6, 2), separable(2, 3), TuningPlan::just(1, 1), quick(4));
        return std::make_pair(m.snapshot(), r.history.back().train_loss);
    };
    EXPECT_EQ(run(), run());
}

TEST(Train, InputErrors) {
    Model m = Model::init(tiny(), PrefixConfig{2, PrefixMode::Embed, 16}, 2, 1);
    EXPECT_THROW(train(m, {}, {}, TuningPlan::prefix_only(1), quick()), DataError);
    auto bad = separable(2, 1);
    bad[0].label = 2;
    EXPECT_THROW(train(m, bad, {}, TuningPlan::prefix_only(1), quick()), LabelError);
    TrainConfig cfg = quick();
    cfg.batch_size = 0;
    EXPECT_THROW(train(m, separable(2, 1), {}, TuningPlan::prefix_only(1), cfg), ConfigError);
    cfg = quick();
    cfg.learning_rate = -1.0;
    EXPECT_THROW(train(m, separable(2, 1), {}, TuningPlan::prefix_only(1), cfg), ConfigError);
}

TEST(Train, DivergenceReportsEpoch) {
    Model m = Model::init(tiny(), PrefixConfig{2, PrefixMode::Embed, 16}, 2, 1);
    TrainConfig cfg = quick(3);
    cfg.learning_rate = 1e300;
    try {
        train(m, separable(4, 1), {}, parse_plan("fft+prefix", 1).plan, cfg);
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_GE(e.epoch(), 1u);
    }
}

TEST(Train, ReferencePreset) { EXPECT_DOUBLE_EQ(TrainConfig::reference().learning_rate, 2e-5); }

TEST(History, CsvFormat) {
    const auto path = (std::filesystem::temp_directory_path() / "pftadb_history.csv").string();
    write_history_csv(path, {{1, 0.5, 0.25}, {2, 0.25, 0.75}});
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "epoch,train_loss,dev_acc");
    std::getline(in, line);
    EXPECT_EQ(line, "1,0.5,0.25");
    std::filesystem::remove(path);
}
