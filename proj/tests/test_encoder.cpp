#include <gtest/gtest.h>

#include "pftadb/model.hpp"
#include "reference.hpp"

using namespace pftadb;

namespace {

EncoderConfig small_config() { return EncoderConfig{2, 8, 2, 16, 13, 10, 12, 1e-12}; }

std::vector<ref::Prefix> random_ref_prefixes(Rng& rng, const EncoderConfig& cfg, std::size_t lp) {
    std::vector<ref::Prefix> out(cfg.num_layers);
    for (auto& p : out) {
        p.key.assign(lp, std::vector<double>(cfg.hidden_dim));
        p.value.assign(lp, std::vector<double>(cfg.hidden_dim));
        for (auto& row : p.key)
            for (double& v : row) v = rng.uniform(-1.0, 1.0);
        for (auto& row : p.value)
            for (double& v : row) v = rng.uniform(-1.0, 1.0);
    }
    return out;
}

Tensor to_tensor(const ref::Mat& m, std::size_t cols) {
    Tensor t({m.size(), cols});
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t c = 0; c < cols; ++c) t(i, c) = m[i][c];
    return t;
}

std::vector<LayerPrefix> bind(Graph& g, const std::vector<ref::Prefix>& ps, std::size_t d) {
    std::vector<LayerPrefix> out;
    for (const auto& p : ps) out.push_back({g.constant(to_tensor(p.key, d)), g.constant(to_tensor(p.value, d))});
    return out;
}

}  // namespace

TEST(EncoderConfig, ValidatesHeads) {
    EncoderConfig c = small_config();
    c.num_heads = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_NO_THROW(EncoderConfig::reference().validate());
    EXPECT_EQ(EncoderConfig::reference().head_dim(), 64u);
}

TEST(Encoder, PrefixFreeMatchesScalarReference) {
    const EncoderConfig cfg = small_config();
    Rng rng(11);
    EncoderParams params = EncoderParams::init(cfg, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const TokenSequence t = ref::random_tokens(rng, cfg);
        Graph g(false);
        const auto empty = empty_prefixes(g, cfg);
        const Tensor y = encode(g, t, params, empty, cfg).value();
        EXPECT_LT(ref::max_abs_diff(ref::encode(t, params, ref::no_prefixes(cfg), cfg), y), 1e-12);
    }
}

TEST(Encoder, PrefixedMatchesScalarReference) {
    const EncoderConfig cfg = small_config();
    Rng rng(12);
    EncoderParams params = EncoderParams::init(cfg, rng);
    for (std::size_t lp : {1u, 3u}) {
        const auto prefixes = random_ref_prefixes(rng, cfg, lp);
        for (int trial = 0; trial < 10; ++trial) {
            const TokenSequence t = ref::random_tokens(rng, cfg);
            Graph g(false);
            const auto bound = bind(g, prefixes, cfg.hidden_dim);
            const Tensor y = encode(g, t, params, bound, cfg).value();
            EXPECT_LT(ref::max_abs_diff(ref::encode(t, params, prefixes, cfg), y), 1e-12);
        }
    }
}

TEST(Attention, ZeroPrefixSingleKeyReturnsValue) {
    Graph g(false);
    const Var q = g.constant(Tensor::matrix({{0.3, -1.0}}));
    const Var k = g.constant(Tensor::matrix({{2.0, 5.0}}));
    const Var v = g.constant(Tensor::matrix({{7.0, -3.0}}));
    const Var empty = g.constant(Tensor({0, 2}));
    const std::vector<std::uint8_t> mask{1};
    EXPECT_EQ(attend(q, k, v, empty, empty, mask, 0.5).value(), Tensor::matrix({{7.0, -3.0}}));
}

TEST(Attention, IdenticalScoresAverageValues) {
    Graph g(false);
    const Var q = g.constant(Tensor::matrix({{0.0, 0.0}}));
    const Var k = g.constant(Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}}));
    const Var v = g.constant(Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}}));
    const Var pk = g.constant(Tensor::matrix({{9.0, 9.0}}));
    const Var pv = g.constant(Tensor::matrix({{4.0, 4.0}}));
    const std::vector<std::uint8_t> mask{1, 1};
    const Tensor y = attend(q, k, v, pk, pv, mask, 1.0).value();
    EXPECT_NEAR(y(0, 0), 5.0 / 3.0, 1e-15);
    EXPECT_NEAR(y(0, 1), 5.0 / 3.0, 1e-15);
}

TEST(Attention, PrefixKeysAreNeverMasked) {
    Graph g(false);
    const Var q = g.constant(Tensor::matrix({{1.0, 0.0}}));
    const Var k = g.constant(Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}}));
    const Var v = g.constant(Tensor::matrix({{1.0, 1.0}, {2.0, 2.0}}));
    const Var pk = g.constant(Tensor::matrix({{0.5, 0.5}}));
    const Var pv = g.constant(Tensor::matrix({{-3.0, 3.0}}));
    // only the first real key is live; the prefix still takes part
    const Tensor y = attend(q, k, v, pk, pv, std::vector<std::uint8_t>{1, 0}, 1.0).value();
    const double a = std::exp(0.5), b = std::exp(1.0);
    EXPECT_NEAR(y(0, 0), (a * -3.0 + b * 1.0) / (a + b), 1e-12);
    EXPECT_NEAR(y(0, 1), (a * 3.0 + b * 1.0) / (a + b), 1e-12);
}

TEST(Attention, MismatchedPrefixLengthsThrow) {
    const EncoderConfig cfg = small_config();
    Rng rng(1);
    EncoderParams params = EncoderParams::init(cfg, rng);
    Graph g(false);
    auto prefixes = empty_prefixes(g, cfg);
    prefixes[0].key = g.constant(Tensor({2, cfg.hidden_dim}));
    const TokenSequence t{{1, 3}, {1, 1}};
    EXPECT_THROW(encode(g, t, params, prefixes, cfg), PrefixError);
}

TEST(Encoder, PaddingDoesNotChangeRealPositions) {
    const EncoderConfig cfg = small_config();
    Rng rng(13);
    EncoderParams params = EncoderParams::init(cfg, rng);
    const TokenSequence real{{1, 4, 6, 2}, {1, 1, 1, 1}};
    const TokenSequence padded{{1, 4, 6, 2, 0, 0, 0}, {1, 1, 1, 1, 0, 0, 0}};
    Graph g(false);
    const auto empty = empty_prefixes(g, cfg);
    const Tensor a = encode(g, real, params, empty, cfg).value();
    const Tensor b = encode(g, padded, params, empty, cfg).value();
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < cfg.hidden_dim; ++c) EXPECT_NEAR(a(i, c), b(i, c), 1e-12);
    EXPECT_EQ(padded.trimmed().ids, real.ids);
}

TEST(Encoder, InputErrors) {
    const EncoderConfig cfg = small_config();
    Rng rng(14);
    EncoderParams params = EncoderParams::init(cfg, rng);
    Graph g(false);
    const auto empty = empty_prefixes(g, cfg);
    TokenSequence too_long;
    too_long.ids.assign(cfg.max_seq_len + 1, 1);
    too_long.mask.assign(cfg.max_seq_len + 1, 1);
    EXPECT_THROW(encode(g, too_long, params, empty, cfg), LengthError);
    EXPECT_THROW(encode(g, TokenSequence{{1, cfg.vocab_size}, {1, 1}}, params, empty, cfg), VocabError);
    EXPECT_THROW(encode(g, TokenSequence{{1, 2}, {1, 1}}, params, std::vector<LayerPrefix>(1, empty[0]), cfg),
                 PrefixError);
}

TEST(Encoder, ParameterNamesAndShapes) {
    const EncoderConfig cfg = small_config();
    EXPECT_EQ(layer_param_name(0, LayerSlot::Wq), "layer.1.attn.Wq");
    EXPECT_EQ(layer_param_name(1, LayerSlot::ln2_bias), "layer.2.ln2.bias");
    EXPECT_EQ(layer_slot_shape(cfg, LayerSlot::W1), (Shape{8, 16}));
    EXPECT_EQ(layer_slot_shape(cfg, LayerSlot::b2), (Shape{8}));
}

// ---- tuning plans --------------------------------------------------------

TEST(Plan, JustAndRestSlots) {
    const TuningPlan just = TuningPlan::just(2, 3);
    EXPECT_TRUE(just.prefix);
    EXPECT_TRUE(just.layers[0].none());
    EXPECT_TRUE(just.layers[1].all());
    EXPECT_TRUE(just.layers[2].none());
    const TuningPlan rest = TuningPlan::rest(2, 3);
    EXPECT_TRUE(rest.layers[0].none());
    EXPECT_TRUE(rest.layers[1].all() && rest.layers[2].all());
    EXPECT_THROW(TuningPlan::just(0, 3), PlanError);
    EXPECT_THROW(TuningPlan::rest(4, 3), PlanError);
}

TEST(Plan, RestIsUnionOfJusts) {
    for (std::size_t n = 1; n <= 4; ++n) {
        for (std::size_t x = 1; x <= n; ++x) {
            TuningPlan u = TuningPlan::just(x, n);
            for (std::size_t y = x + 1; y <= n; ++y) u.merge(TuningPlan::just(y, n));
            EXPECT_EQ(u, TuningPlan::rest(x, n));
        }
    }
    EXPECT_EQ(TuningPlan::just(3, 3), TuningPlan::rest(3, 3));
}

TEST(Plan, ComponentSlots) {
    EXPECT_EQ(component_slots(LayerComponent::KeysAndValues).count(), 2u);
    EXPECT_TRUE(component_slots(LayerComponent::KeysAndValues).test(static_cast<std::size_t>(LayerSlot::Wk)));
    EXPECT_TRUE(component_slots(LayerComponent::KeysAndValues).test(static_cast<std::size_t>(LayerSlot::Wv)));
    EXPECT_EQ(component_slots(LayerComponent::Attention).count(), 8u);
    EXPECT_EQ(component_slots(LayerComponent::FeedForward).count(), 4u);
    EXPECT_EQ(component_slots(LayerComponent::LayerNormalization).count(), 4u);
    EXPECT_TRUE(component_slots(LayerComponent::EntireLayer).all());
    SlotMask parts = component_slots(LayerComponent::Attention) | component_slots(LayerComponent::FeedForward) |
                     component_slots(LayerComponent::LayerNormalization);
    EXPECT_TRUE(parts.all());
}

TEST(Plan, ParseDescriptors) {
    EXPECT_EQ(parse_plan("prefix-only", 2).plan, TuningPlan::prefix_only(2));
    EXPECT_EQ(parse_plan("prefix+just:2", 2).plan, TuningPlan::just(2, 2));
    EXPECT_EQ(parse_plan("prefix+just:last", 3).plan, TuningPlan::just(3, 3));
    EXPECT_EQ(parse_plan("prefix+rest:1", 2).plan, TuningPlan::rest(1, 2));
    EXPECT_EQ(parse_plan("prefix+component:kv", 2).plan,
              TuningPlan::last_layer_component(LayerComponent::KeysAndValues, 2));
    EXPECT_EQ(parse_plan("none", 2).plan, TuningPlan::frozen(2));
    EXPECT_EQ(parse_plan("head", 2).plan, TuningPlan::head_only(2));

    const PlanSpec mlp = parse_plan("prefix(mlp)+just:1", 2);
    ASSERT_TRUE(mlp.prefix_mode.has_value());
    EXPECT_EQ(*mlp.prefix_mode, PrefixMode::Mlp);
    const PlanSpec nopt = parse_plan("fft-nopt", 2);
    EXPECT_TRUE(nopt.drop_prefix);
    EXPECT_TRUE(nopt.plan.embeddings);
    EXPECT_FALSE(nopt.plan.prefix);

    EXPECT_THROW(parse_plan("prefix+just:3", 2), PlanError);
    EXPECT_THROW(parse_plan("prefix+bogus", 2), PlanError);
    EXPECT_THROW(parse_plan("prefix+nopt", 2), PlanError);
    EXPECT_THROW(parse_plan("", 2), PlanError);
    EXPECT_THROW(parse_plan("prefix+component:xyz", 2), PlanError);
}

TEST(Plan, ComponentWithoutPrefixTerm) {
    const TuningPlan p = parse_plan("component:kv", 2).plan;
    EXPECT_FALSE(p.prefix);
    EXPECT_EQ(p.layers[1], component_slots(LayerComponent::KeysAndValues));
    EXPECT_TRUE(p.layers[0].none());
}
