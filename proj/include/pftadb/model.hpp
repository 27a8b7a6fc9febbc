#ifndef PFTADB_MODEL_HPP
#define PFTADB_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pftadb/autodiff.hpp"
#include "pftadb/encoder.hpp"
#include "pftadb/error.hpp"
#include "pftadb/head.hpp"
#include "pftadb/prefix.hpp"
#include "pftadb/rng.hpp"
#include "pftadb/tensor.hpp"

namespace pftadb {

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

enum class ParamKind { TokenEmbedding, PositionEmbedding, Layer, Prefix, HeadDense, HeadClassifier };

struct ParamRole {
    ParamKind kind = ParamKind::Layer;
    std::size_t layer = 0;
    LayerSlot slot = LayerSlot::Wq;
};

struct ParamSpec {
    std::string name;
    Shape shape;
    ParamRole role;
};

/// Names, shapes and roles of every model parameter, without allocating any.
inline std::vector<ParamSpec> parameter_layout(const EncoderConfig& enc, const PrefixConfig& prefix,
                                               std::size_t num_classes) {
    const std::size_t d = enc.hidden_dim, n = enc.num_layers, lp = prefix.length;
    std::vector<ParamSpec> out;
    out.push_back({"embed.token", {enc.vocab_size, d}, {ParamKind::TokenEmbedding}});
    out.push_back({"embed.position", {enc.max_seq_len, d}, {ParamKind::PositionEmbedding}});
    for (std::size_t l = 0; l < n; ++l) {
        for (std::size_t s = 0; s < kLayerSlotCount; ++s) {
            const auto slot = static_cast<LayerSlot>(s);
            out.push_back({layer_param_name(l, slot), layer_slot_shape(enc, slot), {ParamKind::Layer, l, slot}});
        }
    }
    const ParamRole prefix_role{ParamKind::Prefix};
    if (prefix.mode == PrefixMode::Embed) {
        for (std::size_t l = 0; l < n; ++l) {
            out.push_back({prefix_key_name(l), {lp, d}, prefix_role});
            out.push_back({prefix_value_name(l), {lp, d}, prefix_role});
        }
    } else {
        const std::size_t h = prefix.mlp_hidden;
        out.push_back({"prefix.mlp.E", {lp, d}, prefix_role});
        out.push_back({"prefix.mlp.W1", {d, h}, prefix_role});
        out.push_back({"prefix.mlp.b1", {h}, prefix_role});
        out.push_back({"prefix.mlp.W2", {h, 2 * n * d}, prefix_role});
        out.push_back({"prefix.mlp.b2", {2 * n * d}, prefix_role});
    }
    out.push_back({"head.dense.W", {d, enc.feature_dim}, {ParamKind::HeadDense}});
    out.push_back({"head.dense.b", {enc.feature_dim}, {ParamKind::HeadDense}});
    out.push_back({"head.classifier.W", {enc.feature_dim, num_classes}, {ParamKind::HeadClassifier}});
    out.push_back({"head.classifier.b", {num_classes}, {ParamKind::HeadClassifier}});
    return out;
}

inline bool plan_trains(const TuningPlan& plan, const ParamRole& role) {
    switch (role.kind) {
        case ParamKind::TokenEmbedding:
        case ParamKind::PositionEmbedding: return plan.embeddings;
        case ParamKind::Layer: return plan.layers.at(role.layer).test(static_cast<std::size_t>(role.slot));
        case ParamKind::Prefix: return plan.prefix;
        case ParamKind::HeadDense: return plan.head_dense;
        case ParamKind::HeadClassifier: return plan.head_classifier;
    }
    return false;
}

struct ParamStats {
    std::size_t trainable = 0;
    std::size_t total = 0;
    double ratio = 0.0;
    std::size_t trainable_prefix = 0;
    std::size_t trainable_head = 0;
    std::size_t trainable_encoder = 0;  // embeddings and layers
};

/// Trainable scalar count under `plan` and its share of all model scalars.
inline ParamStats trainable_param_stats(const EncoderConfig& enc, const TuningPlan& plan, const PrefixConfig& prefix,
                                        std::size_t num_classes) {
    plan.validate(enc.num_layers);
    ParamStats stats;
    for (const ParamSpec& spec : parameter_layout(enc, prefix, num_classes)) {
        const std::size_t n = shape_size(spec.shape);
        stats.total += n;
        if (!plan_trains(plan, spec.role)) continue;
        stats.trainable += n;
        switch (spec.role.kind) {
            case ParamKind::Prefix: stats.trainable_prefix += n; break;
            case ParamKind::HeadDense:
            case ParamKind::HeadClassifier: stats.trainable_head += n; break;
            default: stats.trainable_encoder += n; break;
        }
    }
    stats.ratio = stats.total ? static_cast<double>(stats.trainable) / static_cast<double>(stats.total) : 0.0;
    return stats;
}

// ---------------------------------------------------------------------------
// Plan descriptors
// ---------------------------------------------------------------------------

/// A parsed plan descriptor. Besides the trainable set, a descriptor may pin
/// the prefix mode ("prefix(mlp)") or remove prefixes entirely ("nopt").
struct PlanSpec {
    TuningPlan plan;
    std::optional<PrefixMode> prefix_mode;
    bool drop_prefix = false;
};

inline LayerComponent parse_component(const std::string& s) {
    if (s == "attn" || s == "attention") return LayerComponent::Attention;
    if (s == "ff" || s == "ffn") return LayerComponent::FeedForward;
    if (s == "ln" || s == "layernorm") return LayerComponent::LayerNormalization;
    if (s == "kv") return LayerComponent::KeysAndValues;
    if (s == "layer" || s == "entire") return LayerComponent::EntireLayer;
    throw PlanError("unknown layer component '" + s + "'");
}

inline const char* component_token(LayerComponent c) {
    switch (c) {
        case LayerComponent::Attention: return "attn";
        case LayerComponent::FeedForward: return "ff";
        case LayerComponent::LayerNormalization: return "ln";
        case LayerComponent::KeysAndValues: return "kv";
        case LayerComponent::EntireLayer: return "layer";
    }
    return "?";
}

/// Parses '+'-joined plan terms:
///   prefix | prefix-only | prefix(mlp) | prefix(emb)   train the prefixes
///   just:x | rest:x                                     layer x alone | layers x..N (x may be "last")
///   component:{attn,ff,ln,kv,layer}                     one group of the last layer
///   fft | fft-nopt | nopt                               embeddings + all layers | without prefixes
///   head                                                head only
///   none                                                nothing trains, head included
/// The dense layer and classifier train unless the descriptor is "none".
inline PlanSpec parse_plan(const std::string& descriptor, std::size_t num_layers) {
    if (descriptor.empty()) throw PlanError("empty plan descriptor");
    PlanSpec spec;
    spec.plan = TuningPlan::head_only(num_layers);
    if (descriptor == "none") {
        spec.plan = TuningPlan::frozen(num_layers);
        return spec;
    }
    auto parse_layer = [&](const std::string& term, std::size_t colon) {
        const std::string digits = term.substr(colon + 1);
        if (digits == "last") return num_layers;
        if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
            throw PlanError("bad layer index in plan term '" + term + "'");
        }
        const std::size_t x = std::stoul(digits);
        TuningPlan::check_layer(x, num_layers);
        return x;
    };
    std::stringstream terms(descriptor);
    std::string term;
    while (std::getline(terms, term, '+')) {
        if (term == "prefix" || term == "prefix-only") {
            spec.plan.prefix = true;
        } else if (term == "prefix(mlp)") {
            spec.plan.prefix = true;
            spec.prefix_mode = PrefixMode::Mlp;
        } else if (term == "prefix(emb)" || term == "prefix(embed)") {
            spec.plan.prefix = true;
            spec.prefix_mode = PrefixMode::Embed;
        } else if (term.rfind("just:", 0) == 0) {
            const std::size_t x = parse_layer(term, 4);
            spec.plan.layers[x - 1].set();
        } else if (term.rfind("rest:", 0) == 0) {
            const std::size_t x = parse_layer(term, 4);
            for (std::size_t l = x - 1; l < num_layers; ++l) spec.plan.layers[l].set();
        } else if (term.rfind("component:", 0) == 0) {
            spec.plan.layers.back() |= component_slots(parse_component(term.substr(10)));
        } else if (term == "fft" || term == "fft-nopt") {
            spec.plan.embeddings = true;
            for (auto& l : spec.plan.layers) l.set();
            spec.drop_prefix = spec.drop_prefix || term == "fft-nopt";
        } else if (term == "nopt") {
            spec.drop_prefix = true;
        } else if (term == "head") {
        } else {
            throw PlanError("unknown plan term '" + term + "' in '" + descriptor + "'");
        }
    }
    if (spec.drop_prefix && spec.plan.prefix) throw PlanError("plan both trains and removes prefixes: " + descriptor);
    return spec;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ParamBinding {
    Parameter* param;
    ParamRole role;
};

/// Encoder, prefix parameters and intent head.
///
/// Parameters are addressed through raw pointers while training, so a Model
/// must not be moved while a Graph or optimizer refers to it.
struct Model {
    EncoderConfig encoder_config;
    PrefixConfig prefix_config;
    EncoderParams encoder;
    PrefixParams prefix;
    HeadParams head;

    std::size_t num_classes() const { return head.num_classes(); }

    /// Encoder, prefix and head initialized from independent streams of `seed`.
    static Model init(const EncoderConfig& enc, const PrefixConfig& prefix_cfg, std::size_t num_classes,
                      std::uint64_t seed) {
        enc.validate();
        prefix_cfg.validate();
        Model m;
        m.encoder_config = enc;
        m.prefix_config = prefix_cfg;
        Rng enc_rng(derive_seed(seed, 1));
        m.encoder = EncoderParams::init(enc, enc_rng);
        m.prefix = init_prefix(prefix_cfg, enc, derive_seed(seed, 2));
        Rng head_rng(derive_seed(seed, 3));
        m.head = HeadParams::init(enc, num_classes, head_rng);
        return m;
    }

    /// Same order as parameter_layout().
    std::vector<ParamBinding> bindings() {
        std::vector<ParamBinding> out;
        out.push_back({&encoder.token_embedding, {ParamKind::TokenEmbedding}});
        out.push_back({&encoder.position_embedding, {ParamKind::PositionEmbedding}});
        for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
            for (std::size_t s = 0; s < kLayerSlotCount; ++s) {
                out.push_back({&encoder.layers[l].slots[s], {ParamKind::Layer, l, static_cast<LayerSlot>(s)}});
            }
        }
        for (Parameter* p : prefix.parameters()) out.push_back({p, {ParamKind::Prefix}});
        out.push_back({&head.dense_w, {ParamKind::HeadDense}});
        out.push_back({&head.dense_b, {ParamKind::HeadDense}});
        out.push_back({&head.classifier_w, {ParamKind::HeadClassifier}});
        out.push_back({&head.classifier_b, {ParamKind::HeadClassifier}});
        return out;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        for (const auto& b : bindings()) out.push_back(b.param);
        return out;
    }

    std::vector<Parameter*> trainable_parameters() {
        std::vector<Parameter*> out;
        for (const auto& b : bindings())
            if (b.param->trainable) out.push_back(b.param);
        return out;
    }

    /// Sets trainable flags on exactly the parameters the plan addresses.
    void apply_plan(const TuningPlan& plan) {
        plan.validate(encoder_config.num_layers);
        for (const auto& b : bindings()) b.param->trainable = plan_trains(plan, b.role);
    }

    std::size_t trainable_scalars() {
        std::size_t n = 0;
        for (Parameter* p : trainable_parameters()) n += p->value.size();
        return n;
    }

    std::size_t total_scalars() {
        std::size_t n = 0;
        for (Parameter* p : parameters()) n += p->value.size();
        return n;
    }

    /// Intent representation of one sequence as a rank-1 graph value.
    Var features(Graph& g, const TokenSequence& tokens, std::span<const LayerPrefix> prefixes) {
        const TokenSequence seq = tokens.trimmed();
        const Var hidden = encode(g, seq, encoder, prefixes, encoder_config);
        return dense_features(g, mean_pool(hidden, seq.mask), head);
    }

    /// Stacked representations (n x feature_dim) of a batch.
    Var batch_features(Graph& g, std::span<const TokenSequence> batch) {
        const std::vector<LayerPrefix> prefixes = prefix.bind(g);
        std::vector<Var> rows;
        rows.reserve(batch.size());
        for (const TokenSequence& t : batch) rows.push_back(features(g, t, prefixes));
        return concat_rows(rows);
    }

    Var batch_logits(Graph& g, std::span<const TokenSequence> batch) {
        return classify(g, batch_features(g, batch), head);
    }

    std::vector<double> represent(const TokenSequence& tokens) {
        Graph g(false);
        const auto prefixes = prefix.bind(g);
        const Tensor& x = features(g, tokens, prefixes).value();
        return {x.data().begin(), x.data().end()};
    }

    Tensor encode_tokens(const TokenSequence& tokens) {
        Graph g(false);
        const auto prefixes = prefix.bind(g);
        return encode(g, tokens, encoder, prefixes, encoder_config).value();
    }

    /// Replaces the prefix parameters by their materialized, frozen bank.
    void finalize_prefix() {
        const PrefixBank bank = finalize(prefix);
        prefix = prefix_from_bank(bank, false);
        prefix_config.mode = PrefixMode::Embed;
    }

    std::vector<Tensor> snapshot() {
        std::vector<Tensor> out;
        for (Parameter* p : parameters()) out.push_back(p->value);
        return out;
    }

    void restore(const std::vector<Tensor>& values) {
        auto params = parameters();
        if (values.size() != params.size()) throw DimensionError("snapshot does not match model");
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
    }
};

// ---------------------------------------------------------------------------
// Checkpoint file
//
//   pftadb-checkpoint 1
//   <name>\t<dim>,<dim>,...\t<v> <v> ...      one line per parameter, %.17g values
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointMagic = "pftadb-checkpoint 1";

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_checkpoint(const std::string& path, Model& model) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << kCheckpointMagic << '\n';
    for (Parameter* p : model.parameters()) {
        out << p->name << '\t';
        for (std::size_t i = 0; i < p->value.rank(); ++i) out << (i ? "," : "") << p->value.shape()[i];
        out << '\t';
        for (std::size_t i = 0; i < p->value.size(); ++i) out << (i ? " " : "") << format_double(p->value[i]);
        out << '\n';
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

inline std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic) throw ParseError("not a checkpoint file: " + path);
    std::vector<std::pair<std::string, Tensor>> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) throw ParseError(path + ":" + std::to_string(line_no) + ": malformed entry");
        Shape shape;
        std::stringstream dims(line.substr(t1 + 1, t2 - t1 - 1));
        std::string dim;
        while (std::getline(dims, dim, ',')) shape.push_back(std::stoul(dim));
        std::vector<double> data;
        data.reserve(shape_size(shape));
        const char* cursor = line.c_str() + t2 + 1;
        char* end = nullptr;
        for (std::size_t i = 0; i < shape_size(shape); ++i) {
            data.push_back(std::strtod(cursor, &end));
            if (end == cursor) throw ParseError(path + ":" + std::to_string(line_no) + ": short value list");
            cursor = end;
        }
        out.emplace_back(line.substr(0, t1), Tensor(std::move(shape), std::move(data)));
    }
    return out;
}

/// Loads values by name. The file must hold exactly the model's parameters.
inline void load_checkpoint(const std::string& path, Model& model) {
    auto entries = read_checkpoint(path);
    std::map<std::string, Tensor> by_name;
    for (auto& [name, t] : entries) by_name.emplace(name, std::move(t));
    auto params = model.parameters();
    if (by_name.size() != params.size()) throw DataError("checkpoint parameter count differs from model: " + path);
    for (Parameter* p : params) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw DataError("checkpoint lacks parameter " + p->name);
        if (it->second.shape() != p->value.shape()) throw DimensionError("checkpoint shape mismatch for " + p->name);
        p->value = it->second;
        p->zero_grad();
    }
}

}  // namespace pftadb

#endif  // PFTADB_MODEL_HPP
