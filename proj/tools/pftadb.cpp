// Command-line front end: training runs, evaluation, splits and ablation tables.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pftadb.hpp"

using namespace pftadb;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::string dataset;
    std::optional<double> kir;
    std::string seeds;
    std::string out_dir = "runs";
    std::string plan;
    std::optional<std::size_t> prefix_len;
    std::string prefix_mode;
    std::vector<std::string> overrides;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "key=value config file")->check(CLI::ExistingFile);
        app->add_option("--dataset", dataset, "TSV corpus (text<TAB>label); default is the synthetic corpus");
        app->add_option("--kir", kir, "known intent ratio in (0, 1]");
        app->add_option("--seeds", seeds, "seed list, e.g. 0,1,3-5");
        app->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
        app->add_option("--plan", plan, "tuning plan, e.g. prefix+just:2, prefix-only, component:kv, fft");
        app->add_option("--prefix-len", prefix_len, "prefix length per layer");
        app->add_option("--prefix-mode", prefix_mode, "mlp or embed");
        app->add_option("--set", overrides, "extra key=value config override (repeatable)");
    }

    ExperimentConfig resolve() const {
        ExperimentConfig cfg = config.empty() ? ExperimentConfig{} : ExperimentConfig::load(config);
        for (const auto& kv : overrides) cfg.merge_text(kv, "--set");
        if (!dataset.empty()) cfg.dataset = dataset;
        if (kir) cfg.kir = *kir;
        if (!seeds.empty()) cfg.seeds = ExperimentConfig::parse_seed_list(seeds);
        if (!plan.empty()) cfg.plan = plan;
        if (prefix_len) cfg.prefix_length = *prefix_len;
        if (!prefix_mode.empty()) cfg.prefix_mode = parse_prefix_mode(prefix_mode);
        cfg.validate();
        return cfg;
    }
};

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    for (auto s : ExperimentConfig::parse_seed_list(text)) out.push_back(static_cast<std::size_t>(s));
    return out;
}

void print_summary(const ExperimentResult& r) {
    std::printf("seeds ok: %zu/%zu\n", r.succeeded, r.seeds.size());
    for (const auto& s : r.seeds) {
        if (s.ok) {
            std::printf("  seed %llu: accuracy %.4f  macro F1 %.4f  open F1 %.4f  known F1 %.4f  (%zu/%zu trainable)\n",
                        static_cast<unsigned long long>(s.seed), s.metrics.accuracy, s.metrics.macro_f1,
                        s.metrics.open_f1, s.metrics.known_macro_f1, s.trainable_params, s.total_params);
        } else {
            std::printf("  seed %llu: failed: %s\n", static_cast<unsigned long long>(s.seed), s.error.c_str());
        }
    }
    std::printf("mean accuracy %.4f (sd %.4f)  macro F1 %.4f (sd %.4f)  open F1 %.4f  known F1 %.4f\n", r.accuracy.mean,
                r.accuracy.stddev, r.macro_f1.mean, r.macro_f1.stddev, r.open_f1.mean, r.known_macro_f1.mean);
    if (r.open_unsupported) std::printf("note: some test split had no open samples; open F1 has zero support\n");
}

void write_split_file(const fs::path& path, const std::vector<SplitExample>& rows) {
    std::vector<LabeledUtterance> out;
    for (const auto& r : rows) out.push_back({r.text, r.intent});
    write_tsv(path.string(), out);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prefix-tuned encoder with adaptive decision boundaries for open intent classification"};
    app.require_subcommand(1);

    Common train_opts, split_opts, length_opts, layer_opts, comp_opts;

    auto* train_cmd = app.add_subcommand("train", "train and evaluate every seed, write run directories and summary.json");
    train_opts.attach(train_cmd);

    std::string run_dir, eval_data, eval_out;
    auto* eval_cmd = app.add_subcommand("eval", "re-evaluate a saved seed run on a labelled TSV");
    eval_cmd->add_option("--run-dir", run_dir, "a seed_<s> directory written by train")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--dataset", eval_data, "TSV to evaluate; unknown labels count as open")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", eval_out, "write metrics JSON here instead of stdout");

    std::uint64_t split_seed = 0;
    auto* split_cmd = app.add_subcommand("split", "write train/dev/test TSVs for one seed");
    split_opts.attach(split_cmd);
    split_cmd->add_option("--seed", split_seed, "split seed")->capture_default_str();

    std::string lengths = "2,4,6,8,10";
    auto* length_cmd = app.add_subcommand("ablate-length", "one run per prefix length");
    length_opts.attach(length_cmd);
    length_cmd->add_option("--lengths", lengths, "prefix lengths, e.g. 2,4,8 or 2-6")->capture_default_str();

    std::string layers;
    auto* layer_cmd = app.add_subcommand("ablate-layers", "No-FT, Just x and x-and-Rest runs");
    layer_opts.attach(layer_cmd);
    layer_cmd->add_option("--layers", layers, "layers to ablate (default: all)");

    auto* comp_cmd = app.add_subcommand("ablate-components", "one run per last-layer component group");
    comp_opts.attach(comp_cmd);

    std::size_t synth_intents = 12, synth_per = 60;
    std::uint64_t synth_seed = 0;
    std::string synth_out = "synth.tsv";
    auto* synth_cmd = app.add_subcommand("synth", "write the synthetic keyword corpus as TSV");
    synth_cmd->add_option("--intents", synth_intents)->capture_default_str();
    synth_cmd->add_option("--per-intent", synth_per)->capture_default_str();
    synth_cmd->add_option("--seed", synth_seed)->capture_default_str();
    synth_cmd->add_option("--out", synth_out)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            const ExperimentConfig cfg = train_opts.resolve();
            const ExperimentResult r = run_experiment(cfg, train_opts.out_dir);
            print_summary(r);
            Table t = main_results_table();
            add_main_result(t, cfg.kir, cfg.plan, r);
            write_report(t, train_opts.out_dir, "results");
            std::cout << "\n" << render_table(t) << "wrote " << train_opts.out_dir << "\n";
        } else if (*eval_cmd) {
            const MetricsReport m = evaluate_run(run_dir, load_tsv(eval_data));
            const std::string json = metrics_to_json(m).dump(2) + "\n";
            if (eval_out.empty()) {
                std::cout << json;
            } else {
                std::ofstream(eval_out) << json;
                std::printf("accuracy %.4f  macro F1 %.4f  open F1 %.4f\nwrote %s\n", m.accuracy, m.macro_f1, m.open_f1,
                            eval_out.c_str());
            }
        } else if (*split_cmd) {
            const ExperimentConfig cfg = split_opts.resolve();
            const Split s = make_split(load_corpus(cfg), cfg.split_spec(split_seed));
            for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
            const fs::path dir(split_opts.out_dir);
            fs::create_directories(dir);
            write_split_file(dir / "train.tsv", s.train);
            write_split_file(dir / "dev.tsv", s.dev);
            write_split_file(dir / "test.tsv", s.test);
            std::ofstream known(dir / "known_classes.txt");
            for (const auto& c : s.known_classes) known << c << "\n";
            std::printf("%zu known / %zu open classes; train %zu, dev %zu, test %zu; wrote %s\n", s.known_classes.size(),
                        s.open_classes.size(), s.train.size(), s.dev.size(), s.test.size(), dir.string().c_str());
        } else if (*length_cmd) {
            const Table t = ablate_prefix_length(length_opts.resolve(), parse_sizes(lengths), length_opts.out_dir);
            write_report(t, length_opts.out_dir, "prefix_length");
            std::cout << render_table(t);
        } else if (*layer_cmd) {
            const ExperimentConfig cfg = layer_opts.resolve();
            std::vector<std::size_t> xs;
            if (layers.empty()) {
                for (std::size_t x = 1; x <= cfg.num_layers; ++x) xs.push_back(x);
            } else {
                xs = parse_sizes(layers);
            }
            const Table t = ablate_layer_grouping(cfg, xs, layer_opts.out_dir);
            write_report(t, layer_opts.out_dir, "layer_grouping");
            std::cout << render_table(t);
        } else if (*comp_cmd) {
            const Table t = ablate_last_layer_components(comp_opts.resolve(), comp_opts.out_dir);
            write_report(t, comp_opts.out_dir, "components");
            std::cout << render_table(t);
        } else if (*synth_cmd) {
            write_tsv(synth_out, synth_corpus(synth_intents, synth_per, synth_seed));
            std::printf("wrote %zu utterances to %s\n", synth_intents * synth_per, synth_out.c_str());
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
