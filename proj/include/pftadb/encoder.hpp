#ifndef PFTADB_ENCODER_HPP
#define PFTADB_ENCODER_HPP

#include <array>
#include <bitset>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pftadb/autodiff.hpp"
#include "pftadb/error.hpp"
#include "pftadb/ops.hpp"
#include "pftadb/rng.hpp"
#include "pftadb/tensor.hpp"

namespace pftadb {

struct EncoderConfig {
    std::size_t num_layers = 2;
    std::size_t hidden_dim = 32;
    std::size_t num_heads = 2;
    std::size_t ff_dim = 64;
    std::size_t vocab_size = 128;
    std::size_t max_seq_len = 32;
    std::size_t feature_dim = 64;
    double layer_norm_eps = 1e-12;

    std::size_t head_dim() const { return hidden_dim / num_heads; }

    void validate() const {
        if (num_layers == 0 || hidden_dim == 0 || num_heads == 0 || ff_dim == 0 || vocab_size == 0 ||
            max_seq_len == 0 || feature_dim == 0) {
            throw ConfigError("encoder config: all extents must be positive");
        }
        if (hidden_dim % num_heads != 0) throw ConfigError("encoder config: hidden_dim must be divisible by num_heads");
        if (!(layer_norm_eps > 0.0)) throw ConfigError("encoder config: layer_norm_eps must be positive");
    }

    /// bert-base-uncased sized encoder.
    static EncoderConfig reference() {
        return EncoderConfig{12, 768, 12, 3072, 30522, 512, 768, 1e-12};
    }

    /// Desk-scale default: feature width 2*d.
    static EncoderConfig desk(std::size_t vocab_size, std::size_t num_layers = 2, std::size_t hidden_dim = 32,
                              std::size_t num_heads = 2) {
        return EncoderConfig{num_layers, hidden_dim, num_heads, 2 * hidden_dim, vocab_size, 32, 2 * hidden_dim, 1e-12};
    }
};

/// Weight slots of one transformer layer. Order doubles as checkpoint order.
enum class LayerSlot : std::size_t {
    Wq, bq, Wk, bk, Wv, bv, Wo, bo,
    W1, b1, W2, b2,
    ln1_gain, ln1_bias, ln2_gain, ln2_bias,
};
inline constexpr std::size_t kLayerSlotCount = 16;

inline constexpr std::array<const char*, kLayerSlotCount> kLayerSlotNames = {
    "attn.Wq", "attn.bq", "attn.Wk", "attn.bk", "attn.Wv", "attn.bv", "attn.Wo", "attn.bo",
    "ffn.W1",  "ffn.b1",  "ffn.W2",  "ffn.b2",  "ln1.gain", "ln1.bias", "ln2.gain", "ln2.bias",
};

inline Shape layer_slot_shape(const EncoderConfig& cfg, LayerSlot slot) {
    const std::size_t d = cfg.hidden_dim, f = cfg.ff_dim;
    switch (slot) {
        case LayerSlot::Wq: case LayerSlot::Wk: case LayerSlot::Wv: case LayerSlot::Wo: return {d, d};
        case LayerSlot::W1: return {d, f};
        case LayerSlot::b1: return {f};
        case LayerSlot::W2: return {f, d};
        default: return {d};
    }
}

/// 1-based layer index in parameter paths, so "layer.12" is the last layer of the reference encoder.
inline std::string layer_param_name(std::size_t layer_index, LayerSlot slot) {
    return "layer." + std::to_string(layer_index + 1) + "." + kLayerSlotNames[static_cast<std::size_t>(slot)];
}

struct EncoderLayerParams {
    std::array<Parameter, kLayerSlotCount> slots;

    Parameter& operator[](LayerSlot s) { return slots[static_cast<std::size_t>(s)]; }
    const Parameter& operator[](LayerSlot s) const { return slots[static_cast<std::size_t>(s)]; }
};

struct EncoderParams {
    Parameter token_embedding;
    Parameter position_embedding;
    std::vector<EncoderLayerParams> layers;

    /// Xavier-uniform projections, zero biases, unit layer-norm gains.
    static EncoderParams init(const EncoderConfig& cfg, Rng& rng) {
        cfg.validate();
        const std::size_t d = cfg.hidden_dim;
        EncoderParams p;
        Tensor tok({cfg.vocab_size, d});
        for (double& v : tok.data()) v = rng.normal(0.0, 1.0);
        Tensor pos({cfg.max_seq_len, d});
        for (double& v : pos.data()) v = rng.normal(0.0, 0.1);
        p.token_embedding = Parameter("embed.token", std::move(tok));
        p.position_embedding = Parameter("embed.position", std::move(pos));
        p.layers.resize(cfg.num_layers);
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
            for (std::size_t s = 0; s < kLayerSlotCount; ++s) {
                const auto slot = static_cast<LayerSlot>(s);
                Tensor t(layer_slot_shape(cfg, slot));
                if (t.rank() == 2) {
                    const double bound = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
                    for (double& v : t.data()) v = rng.uniform(-bound, bound);
                } else if (slot == LayerSlot::ln1_gain || slot == LayerSlot::ln2_gain) {
                    t.fill(1.0);
                }
                p.layers[l][slot] = Parameter(layer_param_name(l, slot), std::move(t));
            }
        }
        return p;
    }
};

using Mask = std::vector<std::uint8_t>;

/// Token ids with the classification token at position 0; mask marks real positions.
struct TokenSequence {
    std::vector<std::size_t> ids;
    Mask mask;

    std::size_t length() const noexcept { return ids.size(); }

    std::size_t real_length() const {
        std::size_t n = 0;
        for (auto m : mask) n += m ? 1 : 0;
        return n;
    }

    /// Drops trailing padding. Masked keys contribute exact zeros to attention,
    /// so encoding the trimmed sequence reproduces the padded result at real positions.
    TokenSequence trimmed() const {
        std::size_t end = ids.size();
        while (end > 0 && !mask[end - 1]) --end;
        return TokenSequence{{ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(end)},
                             {mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(end)}};
    }
};

/// Key and value prefix tokens for one layer, each L_p x d.
struct LayerPrefix {
    Var key;
    Var value;
};

inline constexpr double kMaskedScore = -1e9;

/// Token plus learned absolute position embedding.
inline Var embed(Graph& g, const TokenSequence& tokens, EncoderParams& params, const EncoderConfig& cfg) {
    if (tokens.ids.size() > cfg.max_seq_len) {
        throw LengthError("sequence length " + std::to_string(tokens.ids.size()) + " exceeds max_seq_len " +
                          std::to_string(cfg.max_seq_len));
    }
    if (tokens.mask.size() != tokens.ids.size()) throw DimensionError("embed: mask length differs from token count");
    for (std::size_t id : tokens.ids) {
        if (id >= cfg.vocab_size) {
            throw VocabError("token id " + std::to_string(id) + " outside vocabulary of size " +
                             std::to_string(cfg.vocab_size));
        }
    }
    std::vector<std::size_t> positions(tokens.ids.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
    return add(gather_rows(g.parameter(params.token_embedding), tokens.ids),
               gather_rows(g.parameter(params.position_embedding), std::move(positions)));
}

/// Single-head attention over prefix-extended keys and values:
/// softmax(scale * q [P_k; k]^T + mask) [P_v; v]. Prefix keys are never masked.
inline Var attend(Var q, Var k, Var v, Var prefix_k, Var prefix_v, std::span<const std::uint8_t> key_mask,
                  double score_scale) {
    const std::size_t lp = prefix_k.value().rows();
    if (prefix_v.value().rows() != lp) throw PrefixError("prefix key/value lengths differ");
    if (key_mask.size() != k.value().rows()) throw DimensionError("attend: mask length differs from key count");
    Graph& g = *q.graph();
    Var scores = matmul(q, transpose(concat_rows(prefix_k, k)));
    if (score_scale != 1.0) scores = scale(scores, score_scale);
    bool padded = false;
    for (auto m : key_mask) padded = padded || !m;
    if (padded) {
        Tensor bias({lp + key_mask.size()});
        for (std::size_t j = 0; j < key_mask.size(); ++j) bias[lp + j] = key_mask[j] ? 0.0 : kMaskedScore;
        scores = add_row(scores, g.constant(std::move(bias)));
    }
    return matmul(softmax_rows(scores), concat_rows(prefix_v, v));
}

namespace detail {

inline Var linear(Graph& g, Var x, Parameter& w, Parameter& b) {
    return add_row(matmul(x, g.parameter(w)), g.parameter(b));
}

}  // namespace detail

/// Multi-head self-attention whose keys and values are prefixed per head,
/// followed by the output projection, residual connection and layer norm.
inline Var prefixed_attention(Graph& g, EncoderLayerParams& layer, Var x, const LayerPrefix& prefix,
                              std::span<const std::uint8_t> mask, const EncoderConfig& cfg) {
    const std::size_t d = cfg.hidden_dim, heads = cfg.num_heads, dk = cfg.head_dim();
    const Tensor& pk = prefix.key.value();
    const Tensor& pv = prefix.value.value();
    if (pk.rows() != pv.rows()) {
        throw PrefixError("prefix key length " + std::to_string(pk.rows()) + " differs from value length " +
                          std::to_string(pv.rows()));
    }
    if (pk.cols() != d || pv.cols() != d) throw PrefixError("prefix width differs from hidden_dim");

    const Var q = detail::linear(g, x, layer[LayerSlot::Wq], layer[LayerSlot::bq]);
    const Var k = detail::linear(g, x, layer[LayerSlot::Wk], layer[LayerSlot::bk]);
    const Var v = detail::linear(g, x, layer[LayerSlot::Wv], layer[LayerSlot::bv]);
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(dk));

    std::vector<Var> head_outputs;
    head_outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dk;
        head_outputs.push_back(attend(slice_cols(q, off, dk), slice_cols(k, off, dk), slice_cols(v, off, dk),
                                      slice_cols(prefix.key, off, dk), slice_cols(prefix.value, off, dk), mask,
                                      score_scale));
    }
    const Var merged = heads == 1 ? head_outputs.front() : concat_cols(head_outputs);
    const Var projected = detail::linear(g, merged, layer[LayerSlot::Wo], layer[LayerSlot::bo]);
    return layer_norm(add(x, projected), g.parameter(layer[LayerSlot::ln1_gain]),
                      g.parameter(layer[LayerSlot::ln1_bias]), cfg.layer_norm_eps);
}

/// One post-norm encoder layer: prefixed attention, then GELU feed-forward with residual and norm.
inline Var encoder_layer(Graph& g, EncoderLayerParams& layer, Var x, const LayerPrefix& prefix,
                         std::span<const std::uint8_t> mask, const EncoderConfig& cfg) {
    const Var h = prefixed_attention(g, layer, x, prefix, mask, cfg);
    const Var ff = detail::linear(g, gelu(detail::linear(g, h, layer[LayerSlot::W1], layer[LayerSlot::b1])),
                                  layer[LayerSlot::W2], layer[LayerSlot::b2]);
    return layer_norm(add(h, ff), g.parameter(layer[LayerSlot::ln2_gain]), g.parameter(layer[LayerSlot::ln2_bias]),
                      cfg.layer_norm_eps);
}

/// Final hidden states (len x d) of the full encoder stack.
inline Var encode(Graph& g, const TokenSequence& tokens, EncoderParams& params, std::span<const LayerPrefix> prefixes,
                  const EncoderConfig& cfg) {
    if (prefixes.size() != params.layers.size()) {
        throw PrefixError("prefix bank has " + std::to_string(prefixes.size()) + " layers, encoder has " +
                          std::to_string(params.layers.size()));
    }
    Var x = embed(g, tokens, params, cfg);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        x = encoder_layer(g, params.layers[l], x, prefixes[l], tokens.mask, cfg);
    }
    return x;
}

/// Zero-length prefixes for every layer, i.e. a plain encoder.
inline std::vector<LayerPrefix> empty_prefixes(Graph& g, const EncoderConfig& cfg) {
    std::vector<LayerPrefix> out;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        out.push_back({g.constant(Tensor({0, cfg.hidden_dim})), g.constant(Tensor({0, cfg.hidden_dim}))});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tuning plans
// ---------------------------------------------------------------------------

using SlotMask = std::bitset<kLayerSlotCount>;

/// Groups of last-layer weights that can be unfrozen together.
enum class LayerComponent { Attention, FeedForward, LayerNormalization, KeysAndValues, EntireLayer };

inline SlotMask component_slots(LayerComponent c) {
    SlotMask m;
    auto set = [&m](std::initializer_list<LayerSlot> slots) {
        for (auto s : slots) m.set(static_cast<std::size_t>(s));
    };
    switch (c) {
        case LayerComponent::Attention:
            set({LayerSlot::Wq, LayerSlot::bq, LayerSlot::Wk, LayerSlot::bk, LayerSlot::Wv, LayerSlot::bv,
                 LayerSlot::Wo, LayerSlot::bo});
            break;
        case LayerComponent::FeedForward: set({LayerSlot::W1, LayerSlot::b1, LayerSlot::W2, LayerSlot::b2}); break;
        case LayerComponent::LayerNormalization:
            set({LayerSlot::ln1_gain, LayerSlot::ln1_bias, LayerSlot::ln2_gain, LayerSlot::ln2_bias});
            break;
        case LayerComponent::KeysAndValues: set({LayerSlot::Wk, LayerSlot::Wv}); break;
        case LayerComponent::EntireLayer: m.set(); break;
    }
    return m;
}

inline const char* component_label(LayerComponent c) {
    switch (c) {
        case LayerComponent::Attention: return "Attention";
        case LayerComponent::FeedForward: return "Feed Forward";
        case LayerComponent::LayerNormalization: return "Layer Normalization";
        case LayerComponent::KeysAndValues: return "Keys and Values";
        case LayerComponent::EntireLayer: return "Entire Layer";
    }
    return "?";
}

/// Which parameters train. Everything not addressed here stays frozen.
struct TuningPlan {
    bool embeddings = false;
    std::vector<SlotMask> layers;
    bool prefix = false;
    bool head_dense = true;
    bool head_classifier = true;

    static TuningPlan frozen(std::size_t num_layers) {
        TuningPlan p;
        p.layers.assign(num_layers, SlotMask{});
        p.head_dense = p.head_classifier = false;
        return p;
    }

    /// Head (dense + classifier) only.
    static TuningPlan head_only(std::size_t num_layers) {
        TuningPlan p;
        p.layers.assign(num_layers, SlotMask{});
        return p;
    }

    static TuningPlan prefix_only(std::size_t num_layers) {
        TuningPlan p = head_only(num_layers);
        p.prefix = true;
        return p;
    }

    /// Prefixes plus 1-based layer x alone.
    static TuningPlan just(std::size_t x, std::size_t num_layers) {
        check_layer(x, num_layers);
        TuningPlan p = prefix_only(num_layers);
        p.layers[x - 1].set();
        return p;
    }

    /// Prefixes plus layers x..N.
    static TuningPlan rest(std::size_t x, std::size_t num_layers) {
        check_layer(x, num_layers);
        TuningPlan p = prefix_only(num_layers);
        for (std::size_t l = x - 1; l < num_layers; ++l) p.layers[l].set();
        return p;
    }

    /// Prefixes plus one component group of the last layer.
    static TuningPlan last_layer_component(LayerComponent c, std::size_t num_layers) {
        TuningPlan p = prefix_only(num_layers);
        p.layers.back() = component_slots(c);
        return p;
    }

    static void check_layer(std::size_t x, std::size_t num_layers) {
        if (x < 1 || x > num_layers) {
            throw PlanError("plan addresses layer " + std::to_string(x) + " but the encoder has layers 1.." +
                            std::to_string(num_layers));
        }
    }

    void validate(std::size_t num_layers) const {
        if (layers.size() != num_layers) {
            throw PlanError("plan covers " + std::to_string(layers.size()) + " layers, encoder has " +
                            std::to_string(num_layers));
        }
    }

    TuningPlan& merge(const TuningPlan& other) {
        if (other.layers.size() != layers.size()) throw PlanError("cannot merge plans for different depths");
        embeddings = embeddings || other.embeddings;
        prefix = prefix || other.prefix;
        head_dense = head_dense || other.head_dense;
        head_classifier = head_classifier || other.head_classifier;
        for (std::size_t l = 0; l < layers.size(); ++l) layers[l] |= other.layers[l];
        return *this;
    }

    friend bool operator==(const TuningPlan&, const TuningPlan&) = default;
};

}  // namespace pftadb

#endif  // PFTADB_ENCODER_HPP
