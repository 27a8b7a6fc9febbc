#ifndef PFTADB_EXPERIMENT_HPP
#define PFTADB_EXPERIMENT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pftadb/adb.hpp"
#include "pftadb/data.hpp"
#include "pftadb/error.hpp"
#include "pftadb/eval.hpp"
#include "pftadb/model.hpp"
#include "pftadb/trainer.hpp"

namespace pftadb {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration: flat key=value, '#' comments.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    std::string dataset;  // TSV path; empty selects the synthetic corpus
    std::size_t synth_intents = 12;
    std::size_t synth_per_intent = 60;
    std::uint64_t synth_seed = 0;

    double kir = 0.5;
    double train_fraction = 0.72;
    double dev_fraction = 0.08;
    double test_fraction = 0.20;

    std::size_t num_layers = 2;
    std::size_t hidden_dim = 32;
    std::size_t num_heads = 2;
    std::size_t ff_dim = 64;
    std::size_t max_seq_len = 32;
    std::size_t feature_dim = 64;

    std::size_t prefix_length = 10;
    PrefixMode prefix_mode = PrefixMode::Mlp;
    std::size_t mlp_hidden = 0;  // 0 means 4 * hidden_dim

    std::string plan = "prefix+just:last";

    double learning_rate = 1e-3;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 30;
    std::size_t patience = 10;

    double adb_learning_rate = 0.05;
    std::size_t adb_epochs = 100;

    std::vector<std::uint64_t> seeds = {0};

    void set(const std::string& key, const std::string& value) {
        auto to_size = [&](std::size_t& dst) { dst = parse_unsigned(key, value); };
        auto to_double = [&](double& dst) { dst = parse_double(key, value); };
        if (key == "dataset") dataset = value;
        else if (key == "synth_intents") to_size(synth_intents);
        else if (key == "synth_per_intent") to_size(synth_per_intent);
        else if (key == "synth_seed") synth_seed = parse_unsigned(key, value);
        else if (key == "kir") to_double(kir);
        else if (key == "train_fraction") to_double(train_fraction);
        else if (key == "dev_fraction") to_double(dev_fraction);
        else if (key == "test_fraction") to_double(test_fraction);
        else if (key == "num_layers") to_size(num_layers);
        else if (key == "hidden_dim") to_size(hidden_dim);
        else if (key == "num_heads") to_size(num_heads);
        else if (key == "ff_dim") to_size(ff_dim);
        else if (key == "max_seq_len") to_size(max_seq_len);
        else if (key == "feature_dim") to_size(feature_dim);
        else if (key == "prefix_length") to_size(prefix_length);
        else if (key == "prefix_mode") prefix_mode = parse_prefix_mode(value);
        else if (key == "mlp_hidden") to_size(mlp_hidden);
        else if (key == "plan") plan = value;
        else if (key == "learning_rate") to_double(learning_rate);
        else if (key == "batch_size") to_size(batch_size);
        else if (key == "max_epochs") to_size(max_epochs);
        else if (key == "patience") to_size(patience);
        else if (key == "adb_learning_rate") to_double(adb_learning_rate);
        else if (key == "adb_epochs") to_size(adb_epochs);
        else if (key == "seeds") seeds = parse_seed_list(value);
        else throw ConfigError("unknown config key '" + key + "'");
    }

    /// Applies "key=value" lines; blank lines and '#' comments are ignored.
    void merge_text(const std::string& text, const std::string& origin = "config") {
        std::istringstream in(text);
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const auto first = line.find_first_not_of(" \t");
            if (first == std::string::npos || line[first] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ParseError(origin + ":" + std::to_string(n) + ": expected key=value");
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    static ExperimentConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config " + path);
        std::stringstream buf;
        buf << in.rdbuf();
        ExperimentConfig cfg;
        cfg.merge_text(buf.str(), path);
        return cfg;
    }

    std::string to_text() const {
        std::ostringstream out;
        out << "dataset=" << dataset << '\n'
            << "synth_intents=" << synth_intents << '\n'
            << "synth_per_intent=" << synth_per_intent << '\n'
            << "synth_seed=" << synth_seed << '\n'
            << "kir=" << format_double(kir) << '\n'
            << "train_fraction=" << format_double(train_fraction) << '\n'
            << "dev_fraction=" << format_double(dev_fraction) << '\n'
            << "test_fraction=" << format_double(test_fraction) << '\n'
            << "num_layers=" << num_layers << '\n'
            << "hidden_dim=" << hidden_dim << '\n'
            << "num_heads=" << num_heads << '\n'
            << "ff_dim=" << ff_dim << '\n'
            << "max_seq_len=" << max_seq_len << '\n'
            << "feature_dim=" << feature_dim << '\n'
            << "prefix_length=" << prefix_length << '\n'
            << "prefix_mode=" << prefix_mode_name(prefix_mode) << '\n'
            << "mlp_hidden=" << mlp_hidden << '\n'
            << "plan=" << plan << '\n'
            << "learning_rate=" << format_double(learning_rate) << '\n'
            << "batch_size=" << batch_size << '\n'
            << "max_epochs=" << max_epochs << '\n'
            << "patience=" << patience << '\n'
            << "adb_learning_rate=" << format_double(adb_learning_rate) << '\n'
            << "adb_epochs=" << adb_epochs << '\n'
            << "seeds=" << seed_list_text() << '\n';
        return out.str();
    }

    std::string seed_list_text() const {
        std::string s;
        for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
        return s;
    }

    EncoderConfig encoder_config(std::size_t vocab_size) const {
        EncoderConfig e{num_layers, hidden_dim, num_heads, ff_dim, vocab_size, max_seq_len, feature_dim, 1e-12};
        e.validate();
        return e;
    }

    /// Prefix settings after the plan descriptor's overrides.
    PrefixConfig prefix_config(const PlanSpec& spec) const {
        PrefixConfig p{prefix_length, spec.prefix_mode.value_or(prefix_mode), mlp_hidden ? mlp_hidden : 4 * hidden_dim};
        if (spec.drop_prefix) p.length = 0;
        return p;
    }

    SplitSpec split_spec(std::uint64_t seed) const {
        return SplitSpec{kir, seed, train_fraction, dev_fraction, test_fraction};
    }

    TrainConfig train_config(std::uint64_t seed) const {
        TrainConfig t;
        t.learning_rate = learning_rate;
        t.batch_size = batch_size;
        t.max_epochs = max_epochs;
        t.patience = patience;
        t.seed = seed;
        return t;
    }

    AdbConfig adb_config() const { return AdbConfig{adb_learning_rate, adb_epochs, 0.0}; }

    void validate() const {
        if (seeds.empty()) throw ConfigError("seed list is empty");
        split_spec(0).validate();
        encoder_config(1);
        train_config(0).validate();
        parse_plan(plan, num_layers);
        if (dataset.empty() && synth_intents < 2) throw ConfigError("synthetic corpus needs at least two intents");
    }

    static std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
        std::vector<std::uint64_t> out;
        std::stringstream in(text);
        std::string item;
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            const auto dash = item.find('-');
            if (dash != std::string::npos && dash > 0) {
                const auto lo = parse_unsigned("seeds", item.substr(0, dash));
                const auto hi = parse_unsigned("seeds", item.substr(dash + 1));
                if (hi < lo) throw ConfigError("bad seed range " + item);
                for (auto s = lo; s <= hi; ++s) out.push_back(s);
            } else {
                out.push_back(parse_unsigned("seeds", item));
            }
        }
        if (out.empty()) throw ConfigError("seed list is empty");
        return out;
    }

private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t");
        return s.substr(a, b - a + 1);
    }

    static std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
        if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
            throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + value + "'");
        }
        return std::stoull(value);
    }

    static double parse_double(const std::string& key, const std::string& value) {
        char* end = nullptr;
        const double v = std::strtod(value.c_str(), &end);
        if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v)) {
            throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
        }
        return v;
    }
};

// ---------------------------------------------------------------------------
// End-to-end runs
// ---------------------------------------------------------------------------

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricsReport metrics;
    std::size_t trainable_params = 0;
    std::size_t total_params = 0;
    std::size_t epochs_run = 0;
    std::string run_dir;
};

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for a single seed
};

struct ExperimentResult {
    std::vector<SeedOutcome> seeds;
    MetricSummary accuracy, macro_f1, open_f1, known_macro_f1;
    std::size_t succeeded = 0;
    /// Set when some seed's test set had no open sample (KIR = 1), making open F1 a 0-support value.
    bool open_unsupported = false;
};

inline MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

inline std::vector<LabeledUtterance> load_corpus(const ExperimentConfig& cfg) {
    if (!cfg.dataset.empty()) return load_tsv(cfg.dataset);
    return synth_corpus(cfg.synth_intents, cfg.synth_per_intent, cfg.synth_seed);
}

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::vector<IntentRepresentation> extract(Model& model, const std::vector<EncodedExample>& rows) {
    std::vector<IntentRepresentation> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back({r.id, r.label, model.represent(r.tokens)});
    return out;
}

inline std::vector<int> labels_of(const std::vector<IntentRepresentation>& reps) {
    std::vector<int> y;
    y.reserve(reps.size());
    for (const auto& r : reps) y.push_back(r.label);
    return y;
}

inline std::vector<std::string> class_names(const Split& split) {
    std::vector<std::string> names = split.known_classes;
    names.push_back("OPEN");
    return names;
}

}  // namespace detail

/// split -> pre-train -> finalize prefixes -> extract representations -> ADB -> evaluate, for one seed.
inline SeedOutcome run_seed(const ExperimentConfig& cfg, const std::vector<LabeledUtterance>& corpus,
                            std::uint64_t seed, const std::string& run_dir = "") {
    SeedOutcome out;
    out.seed = seed;
    out.run_dir = run_dir;

    const Split split = make_split(corpus, cfg.split_spec(seed));
    std::vector<std::string> train_texts;
    for (const auto& ex : split.train) train_texts.push_back(ex.text);
    const Vocabulary vocab = Vocabulary::build(train_texts);

    const PlanSpec spec = parse_plan(cfg.plan, cfg.num_layers);
    const EncoderConfig enc = cfg.encoder_config(vocab.size());
    const PrefixConfig prefix = cfg.prefix_config(spec);
    const std::size_t known = split.known_classes.size();

    const auto train_rows = encode_examples(split.train, vocab, cfg.max_seq_len);
    const auto dev_rows = encode_examples(split.dev, vocab, cfg.max_seq_len);
    const auto test_rows = encode_examples(split.test, vocab, cfg.max_seq_len);

    Model model = Model::init(enc, prefix, known, seed);
    const TrainResult trained = train(model, train_rows, dev_rows, spec.plan, cfg.train_config(seed));
    out.trainable_params = model.trainable_scalars();
    out.total_params = model.total_scalars();
    out.epochs_run = trained.history.size();

    model.finalize_prefix();
    const auto train_reps = detail::extract(model, train_rows);
    const auto test_reps = detail::extract(model, test_rows);
    const std::vector<int> train_labels = detail::labels_of(train_reps);
    const BoundarySet boundaries = learn_boundaries(stack_features(train_reps), train_labels, known, cfg.adb_config());

    std::vector<int> preds, golds;
    for (const auto& r : test_reps) {
        preds.push_back(predict_open(r.features, boundaries));
        golds.push_back(r.label);
    }
    out.metrics = compute_metrics(confusion(preds, golds, known + 1), detail::class_names(split));
    out.ok = true;

    if (!run_dir.empty()) {
        const fs::path dir(run_dir);
        fs::create_directories(dir);
        detail::write_text(dir / "config.txt", cfg.to_text());
        detail::write_text(dir / "metrics.json", metrics_to_json(out.metrics).dump(2) + "\n");
        write_history_csv((dir / "history.csv").string(), trained.history);
        write_checkpoint((dir / "checkpoint.txt").string(), model);
        write_boundaries((dir / "boundaries.tsv").string(), boundaries);
        write_representations((dir / "reps_train.tsv").string(), train_reps);
        write_representations((dir / "reps_test.tsv").string(), test_reps);
        vocab.save((dir / "vocab.txt").string());
        std::string classes;
        for (const auto& c : split.known_classes) classes += c + "\n";
        detail::write_text(dir / "classes.txt", classes);
    }
    return out;
}

inline ojson result_to_json(const ExperimentResult& r) {
    ojson j;
    auto summary = [](const MetricSummary& s) { return ojson{{"mean", s.mean}, {"stddev", s.stddev}}; };
    j["succeeded"] = r.succeeded;
    j["accuracy"] = summary(r.accuracy);
    j["macro_f1"] = summary(r.macro_f1);
    j["open_f1"] = summary(r.open_f1);
    j["known_macro_f1"] = summary(r.known_macro_f1);
    j["open_unsupported"] = r.open_unsupported;
    auto& seeds = j["seeds"] = ojson::array();
    for (const auto& s : r.seeds) {
        ojson e{{"seed", s.seed}, {"ok", s.ok}};
        if (s.ok) {
            e["accuracy"] = s.metrics.accuracy;
            e["macro_f1"] = s.metrics.macro_f1;
            e["open_f1"] = s.metrics.open_f1;
            e["known_macro_f1"] = s.metrics.known_macro_f1;
            e["trainable_params"] = s.trainable_params;
            e["total_params"] = s.total_params;
            e["epochs_run"] = s.epochs_run;
        } else {
            e["error"] = s.error;
        }
        seeds.push_back(std::move(e));
    }
    return j;
}

/// Runs every seed; a failing seed is recorded and skipped. Throws only if
/// all seeds fail. With an output directory, writes config.txt,
/// seed_<s>/... and summary.json there.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir = "") {
    cfg.validate();
    const auto corpus = load_corpus(cfg);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        detail::write_text(fs::path(out_dir) / "config.txt", cfg.to_text());
    }
    ExperimentResult result;
    std::vector<double> acc, mf1, of1, kf1;
    std::string errors;
    for (std::uint64_t seed : cfg.seeds) {
        const std::string dir = out_dir.empty() ? "" : (fs::path(out_dir) / ("seed_" + std::to_string(seed))).string();
        SeedOutcome outcome;
        try {
            outcome = run_seed(cfg, corpus, seed, dir);
        } catch (const Error& e) {
            outcome.seed = seed;
            outcome.ok = false;
            outcome.error = e.what();
            outcome.run_dir = dir;
            errors += "seed " + std::to_string(seed) + ": " + e.what() + "\n";
        }
        if (outcome.ok) {
            ++result.succeeded;
            acc.push_back(outcome.metrics.accuracy);
            mf1.push_back(outcome.metrics.macro_f1);
            of1.push_back(outcome.metrics.open_f1);
            kf1.push_back(outcome.metrics.known_macro_f1);
            result.open_unsupported = result.open_unsupported || outcome.metrics.open_unsupported();
        }
        result.seeds.push_back(std::move(outcome));
    }
    result.accuracy = summarize(acc);
    result.macro_f1 = summarize(mf1);
    result.open_f1 = summarize(of1);
    result.known_macro_f1 = summarize(kf1);
    if (!out_dir.empty()) {
        detail::write_text(fs::path(out_dir) / "summary.json", result_to_json(result).dump(2) + "\n");
    }
    if (result.succeeded == 0) throw Error("every seed failed:\n" + errors);
    return result;
}

/// Re-evaluates a persisted seed run on labelled utterances. Labels outside
/// the run's known classes count as open.
inline MetricsReport evaluate_run(const std::string& run_dir, const std::vector<LabeledUtterance>& rows) {
    const fs::path dir(run_dir);
    ExperimentConfig cfg;
    cfg.merge_text(detail::read_text(dir / "config.txt"), (dir / "config.txt").string());
    const Vocabulary vocab = Vocabulary::load((dir / "vocab.txt").string());
    std::vector<std::string> known;
    {
        std::istringstream in(detail::read_text(dir / "classes.txt"));
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) known.push_back(line);
    }
    const PlanSpec spec = parse_plan(cfg.plan, cfg.num_layers);
    PrefixConfig prefix = cfg.prefix_config(spec);
    prefix.mode = PrefixMode::Embed;  // checkpoints hold finalized prefixes
    Model model = Model::init(cfg.encoder_config(vocab.size()), prefix, known.size(), 0);
    load_checkpoint((dir / "checkpoint.txt").string(), model);
    const BoundarySet boundaries = read_boundaries((dir / "boundaries.tsv").string());
    if (boundaries.num_classes() != known.size()) throw DataError("boundaries do not match the run's known classes");

    const int open = static_cast<int>(known.size());
    std::vector<int> preds, golds;
    for (const auto& row : rows) {
        const auto it = std::find(known.begin(), known.end(), row.label);
        golds.push_back(it == known.end() ? open : static_cast<int>(it - known.begin()));
        preds.push_back(predict_open(model.represent(tokenize(row.text, vocab, cfg.max_seq_len)), boundaries));
    }
    known.push_back("OPEN");
    return compute_metrics(confusion(preds, golds, known.size()), known);
}

/// ADB-only evaluation from a representation dump and a boundaries file.
inline MetricsReport evaluate_representations(const std::vector<IntentRepresentation>& reps,
                                              const BoundarySet& boundaries) {
    std::vector<int> preds, golds;
    for (const auto& r : reps) {
        preds.push_back(predict_open(r.features, boundaries));
        golds.push_back(r.label);
    }
    return compute_metrics(confusion(preds, golds, boundaries.num_classes() + 1));
}

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

/// Rows are JSON objects keyed by column name. Fractional metric values are
/// stored in [0, 1] and rendered as percentages; integers and strings render
/// as-is. Keys outside `columns` (run directories, parameter counts) ride
/// along in the JSON only.
struct Table {
    std::string title;
    std::vector<std::string> columns;
    std::vector<ojson> rows;
};

inline std::string render_cell(const ojson& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    if (v.is_number_float()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v.get<double>());
        return buf;
    }
    return v.dump();
}

inline std::string render_table(const Table& t) {
    if (t.rows.empty()) throw DataError("report has no rows");
    std::vector<std::vector<std::string>> cells;
    std::vector<std::size_t> width(t.columns.size());
    for (std::size_t c = 0; c < t.columns.size(); ++c) width[c] = t.columns[c].size();
    for (const auto& row : t.rows) {
        std::vector<std::string> line;
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            line.push_back(row.contains(t.columns[c]) ? render_cell(row[t.columns[c]]) : "/");
            width[c] = std::max(width[c], line.back().size());
        }
        cells.push_back(std::move(line));
    }
    std::ostringstream out;
    if (!t.title.empty()) out << t.title << '\n';
    auto emit = [&](const std::vector<std::string>& line) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            out << (c ? "  " : "") << line[c] << std::string(width[c] - line[c].size(), ' ');
        }
        out << '\n';
    };
    emit(t.columns);
    std::size_t total = 0;
    for (auto w : width) total += w;
    out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    for (const auto& line : cells) emit(line);
    return out.str();
}

inline ojson table_to_json(const Table& t) {
    return ojson{{"title", t.title}, {"columns", t.columns}, {"rows", t.rows}};
}

inline Table table_from_json(const ojson& j) {
    Table t;
    t.title = j.at("title").get<std::string>();
    t.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& r : j.at("rows")) t.rows.push_back(r);
    return t;
}

/// Writes <stem>.txt (aligned table) and <stem>.json into out_dir.
inline void write_report(const Table& t, const std::string& out_dir, const std::string& stem = "table") {
    const std::string text = render_table(t);
    fs::create_directories(out_dir);
    detail::write_text(fs::path(out_dir) / (stem + ".txt"), text);
    detail::write_text(fs::path(out_dir) / (stem + ".json"), table_to_json(t).dump(2) + "\n");
}

inline std::string percent_label(double kir) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%g%%", 100.0 * kir);
    return buf;
}

/// KIR | Method | Accuracy | F1-Score
inline Table main_results_table() { return Table{"Main results", {"KIR", "Method", "Accuracy", "F1-Score"}, {}}; }

inline void add_main_result(Table& t, double kir, const std::string& method, const ExperimentResult& r) {
    t.rows.push_back(ojson{{"KIR", percent_label(kir)}, {"Method", method}, {"Accuracy", r.accuracy.mean},
                           {"F1-Score", r.macro_f1.mean}, {"Open", r.open_f1.mean}, {"Known", r.known_macro_f1.mean}});
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

namespace detail {

inline std::string sub_dir(const std::string& root, const std::string& name) {
    return root.empty() ? std::string() : (fs::path(root) / name).string();
}

inline std::string prefix_term(const ExperimentConfig& cfg) {
    return std::string("prefix(") + (cfg.prefix_mode == PrefixMode::Mlp ? "mlp" : "emb") + ")";
}

inline std::size_t mean_trainable(const ExperimentResult& r) {
    for (const auto& s : r.seeds)
        if (s.ok) return s.trainable_params;
    return 0;
}

}  // namespace detail

/// One run per prefix length; columns Length | Accuracy | F1-score | Open | Known.
inline Table ablate_prefix_length(const ExperimentConfig& base, const std::vector<std::size_t>& lengths,
                                  const std::string& out_dir = "") {
    if (lengths.empty()) throw ConfigError("no prefix lengths given");
    Table t{"Prefix length (" + base.plan + ")", {"Length", "Accuracy", "F1-score", "Open", "Known"}, {}};
    for (std::size_t len : lengths) {
        if (len == 0) throw ConfigError("prefix lengths must be positive");
        ExperimentConfig cfg = base;
        cfg.prefix_length = len;
        const std::string dir = detail::sub_dir(out_dir, "length_" + std::to_string(len));
        const ExperimentResult r = run_experiment(cfg, dir);
        t.rows.push_back(ojson{{"Length", len}, {"Accuracy", r.accuracy.mean}, {"F1-score", r.macro_f1.mean},
                               {"Open", r.open_f1.mean}, {"Known", r.known_macro_f1.mean},
                               {"trainable_params", detail::mean_trainable(r)}, {"run_dirs", {dir}}});
    }
    return t;
}

/// No-FT (prefixes only), then for each x (descending) "Just x" and "x and
/// Rest". At x = N both plans coincide and the run is shared.
inline Table ablate_layer_grouping(const ExperimentConfig& base, std::vector<std::size_t> layers,
                                   const std::string& out_dir = "") {
    if (layers.empty()) throw ConfigError("no layers given");
    for (std::size_t x : layers) TuningPlan::check_layer(x, base.num_layers);
    std::sort(layers.begin(), layers.end(), std::greater<>());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());

    Table t{"Layer grouping",
            {"x", "Just x Accuracy", "Just x F1-Score", "x and Rest Accuracy", "x and Rest F1-Score"},
            {}};
    const std::string prefix = detail::prefix_term(base);
    auto run = [&](const std::string& plan, const std::string& name) {
        ExperimentConfig cfg = base;
        cfg.plan = plan;
        const std::string dir = detail::sub_dir(out_dir, name);
        return std::make_pair(run_experiment(cfg, dir), dir);
    };

    const auto [noft, noft_dir] = run(prefix, "no_ft");
    t.rows.push_back(ojson{{"x", "No-FT"},
                           {"Just x Accuracy", noft.accuracy.mean},
                           {"Just x F1-Score", noft.macro_f1.mean},
                           {"x and Rest Accuracy", noft.accuracy.mean},
                           {"x and Rest F1-Score", noft.macro_f1.mean},
                           {"just_trainable_params", detail::mean_trainable(noft)},
                           {"rest_trainable_params", detail::mean_trainable(noft)},
                           {"run_dirs", {noft_dir}}});
    for (std::size_t x : layers) {
        const std::string xs = std::to_string(x);
        const auto [just, just_dir] = run(prefix + "+just:" + xs, "layer_" + xs + "/just");
        ExperimentResult rest = just;
        std::vector<std::string> dirs{just_dir};
        if (x != base.num_layers) {
            auto [r, rest_dir] = run(prefix + "+rest:" + xs, "layer_" + xs + "/rest");
            rest = std::move(r);
            dirs.push_back(rest_dir);
        }
        t.rows.push_back(ojson{{"x", x},
                               {"Just x Accuracy", just.accuracy.mean},
                               {"Just x F1-Score", just.macro_f1.mean},
                               {"x and Rest Accuracy", rest.accuracy.mean},
                               {"x and Rest F1-Score", rest.macro_f1.mean},
                               {"just_trainable_params", detail::mean_trainable(just)},
                               {"rest_trainable_params", detail::mean_trainable(rest)},
                               {"run_dirs", dirs}});
    }
    return t;
}

inline constexpr LayerComponent kAblatedComponents[] = {
    LayerComponent::Attention, LayerComponent::FeedForward, LayerComponent::LayerNormalization,
    LayerComponent::KeysAndValues, LayerComponent::EntireLayer};

/// One run per last-layer component group, prefixes always trained.
inline Table ablate_last_layer_components(const ExperimentConfig& base, const std::string& out_dir = "") {
    Table t{"Last-layer components", {"Method", "Accuracy", "F1-Score", "Open", "Known"}, {}};
    for (LayerComponent c : kAblatedComponents) {
        ExperimentConfig cfg = base;
        cfg.plan = detail::prefix_term(base) + "+component:" + component_token(c);
        const std::string dir = detail::sub_dir(out_dir, std::string("component_") + component_token(c));
        const ExperimentResult r = run_experiment(cfg, dir);
        t.rows.push_back(ojson{{"Method", component_label(c)}, {"Accuracy", r.accuracy.mean},
                               {"F1-Score", r.macro_f1.mean}, {"Open", r.open_f1.mean},
                               {"Known", r.known_macro_f1.mean}, {"trainable_params", detail::mean_trainable(r)},
                               {"run_dirs", {dir}}});
    }
    return t;
}

}  // namespace pftadb

#endif  // PFTADB_EXPERIMENT_HPP
