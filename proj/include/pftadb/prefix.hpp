#ifndef PFTADB_PREFIX_HPP
#define PFTADB_PREFIX_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pftadb/autodiff.hpp"
#include "pftadb/encoder.hpp"
#include "pftadb/error.hpp"
#include "pftadb/ops.hpp"
#include "pftadb/rng.hpp"
#include "pftadb/tensor.hpp"

namespace pftadb {

enum class PrefixMode { Embed, Mlp };

inline const char* prefix_mode_name(PrefixMode m) { return m == PrefixMode::Embed ? "embed" : "mlp"; }

inline PrefixMode parse_prefix_mode(const std::string& s) {
    if (s == "embed" || s == "emb") return PrefixMode::Embed;
    if (s == "mlp") return PrefixMode::Mlp;
    throw ConfigError("unknown prefix mode '" + s + "' (expected embed or mlp)");
}

struct PrefixConfig {
    std::size_t length = 10;
    PrefixMode mode = PrefixMode::Mlp;
    std::size_t mlp_hidden = 512;

    void validate() const {
        if (mode == PrefixMode::Mlp && mlp_hidden == 0) throw ConfigError("prefix config: mlp_hidden must be >= 1");
    }

    /// Reparameterized prefixes of length 10 through a 512-wide perceptron.
    static PrefixConfig reference() { return PrefixConfig{10, PrefixMode::Mlp, 512}; }

    /// Desk scale: hidden width 4*d.
    static PrefixConfig desk(const EncoderConfig& enc, std::size_t length = 10, PrefixMode mode = PrefixMode::Mlp) {
        return PrefixConfig{length, mode, 4 * enc.hidden_dim};
    }
};

/// Materialized prefixes: per layer a key and a value block, each L_p x d.
struct PrefixBank {
    std::vector<Tensor> keys;
    std::vector<Tensor> values;

    std::size_t num_layers() const noexcept { return keys.size(); }
    std::size_t length() const noexcept { return keys.empty() ? 0 : keys.front().rows(); }

    /// (N, 2, L_p, d)
    Shape shape() const {
        const std::size_t d = keys.empty() ? 0 : keys.front().cols();
        return {keys.size(), 2, length(), d};
    }

    std::vector<LayerPrefix> bind(Graph& g) const {
        std::vector<LayerPrefix> out;
        out.reserve(keys.size());
        for (std::size_t l = 0; l < keys.size(); ++l) out.push_back({g.constant(keys[l]), g.constant(values[l])});
        return out;
    }
};

inline std::string prefix_key_name(std::size_t layer) { return "prefix.layer." + std::to_string(layer + 1) + ".key"; }
inline std::string prefix_value_name(std::size_t layer) {
    return "prefix.layer." + std::to_string(layer + 1) + ".value";
}

/// Trainable prefix parameters.
///
/// Embed mode stores the bank directly. Mlp mode stores base embeddings E
/// (L_p x d) and one shared two-layer perceptron d -> h -> 2*N*d whose output
/// row i holds, for every layer, the key then value vector of prefix token i.
struct PrefixParams {
    PrefixMode mode = PrefixMode::Embed;
    std::size_t num_layers = 0;
    std::size_t length = 0;
    std::size_t hidden_dim = 0;

    std::vector<Parameter> keys;    // Embed mode
    std::vector<Parameter> values;  // Embed mode

    Parameter base;                 // Mlp mode: E
    Parameter w1, b1, w2, b2;       // Mlp mode

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        if (mode == PrefixMode::Embed) {
            for (std::size_t l = 0; l < keys.size(); ++l) {
                out.push_back(&keys[l]);
                out.push_back(&values[l]);
            }
        } else {
            out = {&base, &w1, &b1, &w2, &b2};
        }
        return out;
    }

    std::size_t scalar_count() {
        std::size_t n = 0;
        for (Parameter* p : parameters()) n += p->value.size();
        return n;
    }

    /// Prefix tensors as graph values; gradients flow to whichever parameters back them.
    std::vector<LayerPrefix> bind(Graph& g) {
        std::vector<LayerPrefix> out;
        out.reserve(num_layers);
        if (mode == PrefixMode::Embed) {
            for (std::size_t l = 0; l < num_layers; ++l) out.push_back({g.parameter(keys[l]), g.parameter(values[l])});
            return out;
        }
        const std::size_t d = hidden_dim;
        if (length == 0) return empty_prefixes_for(g);
        const Var hidden = tanh(add_row(matmul(g.parameter(base), g.parameter(w1)), g.parameter(b1)));
        const Var flat = add_row(matmul(hidden, g.parameter(w2)), g.parameter(b2));
        for (std::size_t l = 0; l < num_layers; ++l) {
            out.push_back({slice_cols(flat, (2 * l) * d, d), slice_cols(flat, (2 * l + 1) * d, d)});
        }
        return out;
    }

private:
    std::vector<LayerPrefix> empty_prefixes_for(Graph& g) const {
        std::vector<LayerPrefix> out;
        for (std::size_t l = 0; l < num_layers; ++l) {
            out.push_back({g.constant(Tensor({0, hidden_dim})), g.constant(Tensor({0, hidden_dim}))});
        }
        return out;
    }
};

/// Uniform(-0.1, 0.1) initialization, deterministic in the seed.
inline PrefixParams init_prefix(const PrefixConfig& cfg, const EncoderConfig& enc, std::uint64_t seed) {
    cfg.validate();
    enc.validate();
    Rng rng(seed);
    auto draw = [&rng](Shape shape) {
        Tensor t(std::move(shape));
        for (double& v : t.data()) v = rng.uniform(-0.1, 0.1);
        return t;
    };
    const std::size_t n = enc.num_layers, d = enc.hidden_dim, lp = cfg.length;
    PrefixParams p;
    p.mode = cfg.mode;
    p.num_layers = n;
    p.length = lp;
    p.hidden_dim = d;
    if (cfg.mode == PrefixMode::Embed) {
        for (std::size_t l = 0; l < n; ++l) {
            p.keys.emplace_back(prefix_key_name(l), draw({lp, d}));
            p.values.emplace_back(prefix_value_name(l), draw({lp, d}));
        }
    } else {
        const std::size_t h = cfg.mlp_hidden;
        p.base = Parameter("prefix.mlp.E", draw({lp, d}));
        p.w1 = Parameter("prefix.mlp.W1", draw({d, h}));
        p.b1 = Parameter("prefix.mlp.b1", draw({h}));
        p.w2 = Parameter("prefix.mlp.W2", draw({h, 2 * n * d}));
        p.b2 = Parameter("prefix.mlp.b2", draw({2 * n * d}));
    }
    return p;
}

/// Runs the prefix parameters forward (no gradients) into plain tensors.
inline PrefixBank materialize(PrefixParams& pp) {
    Graph g(false);
    PrefixBank bank;
    for (const LayerPrefix& lp : pp.bind(g)) {
        bank.keys.push_back(lp.key.value());
        bank.values.push_back(lp.value.value());
    }
    return bank;
}

/// Embed-mode parameters holding a fixed bank; used after finalization.
inline PrefixParams prefix_from_bank(const PrefixBank& bank, bool trainable = false) {
    PrefixParams p;
    p.mode = PrefixMode::Embed;
    p.num_layers = bank.num_layers();
    p.length = bank.length();
    p.hidden_dim = bank.keys.empty() ? 0 : bank.keys.front().cols();
    for (std::size_t l = 0; l < bank.num_layers(); ++l) {
        p.keys.emplace_back(prefix_key_name(l), bank.keys[l], trainable);
        p.values.emplace_back(prefix_value_name(l), bank.values[l], trainable);
    }
    return p;
}

/// Keeps only the materialized prefixes; any reparameterizing perceptron is dropped.
inline PrefixBank finalize(PrefixParams& pp) { return materialize(pp); }

}  // namespace pftadb

#endif  // PFTADB_PREFIX_HPP
