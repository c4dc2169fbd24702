#include <algorithm>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "handover/error.hpp"
#include "handover/log.hpp"
#include "handover_cli/commands.hpp"

namespace handover::cli {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::string preset = "paper";
    std::optional<std::uint64_t> seed;
    std::string output_dir;
    bool quiet = false;
};

RunConfig resolve_config(const GlobalOptions& g) {
    RunConfig base;
    if (g.preset == "paper")
        base = paper_preset();
    else if (g.preset == "desk")
        base = desk_preset();
    else
        throw ConfigError("unknown preset '" + g.preset + "' (expected paper or desk)");
    RunConfig c = g.config_path.empty() ? base : load_run_config(g.config_path, base);
    if (g.seed) c.seed = *g.seed;
    if (!g.output_dir.empty()) c.output_dir = g.output_dir;
    c.derive_seeds();
    return c;
}

fs::path or_default(const std::string& flag, const fs::path& fallback) {
    return flag.empty() ? fallback : fs::path(flag);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Handover models for a hip-mounted robotic arm: data, training, evaluation, simulation."};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("-c,--config", g.config_path, "Run config JSON; flags override its values")
        ->check(CLI::ExistingFile);
    app.add_option("--preset", g.preset, "Base values before the config file: paper or desk")
        ->check(CLI::IsMember({"paper", "desk"}));
    app.add_option("--seed", g.seed, "Root seed (overrides config)");
    app.add_option("-o,--output-dir", g.output_dir, "Output root (default: config, then $HANDOVER_HOME)");
    app.add_flag("-q,--quiet", g.quiet, "Only log warnings and errors");

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "Generate the synthetic mocap corpus");
    std::string synth_out;
    std::optional<int> synth_total;
    std::optional<int> synth_pairs;
    synth->add_option("--out", synth_out, "Corpus directory (default: data.corpus_dir or <output>/corpus)");
    synth->add_option("--total-clips", synth_total, "Clip count, spread evenly over activities")
        ->check(CLI::NonNegativeNumber);
    synth->add_option("--pair-count", synth_pairs, "Number of participant pairs")->check(CLI::PositiveNumber);

    // train / eval / importance share the model positional
    std::string model_name;
    std::string corpus_flag;
    auto* train = app.add_subcommand("train", "Train one model on the train split");
    std::string train_out;
    std::optional<int> epochs;
    std::optional<int> stage2_epochs;
    std::optional<int> train_stride;
    train->add_option("model", model_name, "svae, rot or timing")->required()->check(
        CLI::IsMember({"svae", "rot", "timing"}));
    train->add_option("--corpus", corpus_flag, "Corpus directory");
    train->add_option("--out", train_out, "Checkpoint directory (default: <output>/models)");
    train->add_option("--epochs", epochs, "Epochs (svae: stage 1)")->check(CLI::NonNegativeNumber);
    train->add_option("--stage2-epochs", stage2_epochs, "svae stage 2 epochs (caps the KL-only phase)")->check(CLI::NonNegativeNumber);
    train->add_option("--window-stride", train_stride, "rot/timing training window stride")
        ->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("eval", "Per-activity report for a trained checkpoint");
    std::string checkpoint_flag;
    std::string eval_out;
    std::string split_name = "test";
    eval->add_option("model", model_name, "svae, rot or timing")->required()->check(
        CLI::IsMember({"svae", "rot", "timing"}));
    eval->add_option("--checkpoint", checkpoint_flag, "Checkpoint (default: <output>/models/<model>.ckpt)");
    eval->add_option("--corpus", corpus_flag, "Corpus directory");
    eval->add_option("--split", split_name, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));
    eval->add_option("--out", eval_out, "Report CSV (default: <output>/reports/<model>_<split>.csv)");

    auto* importance = app.add_subcommand("importance", "Joint importance ranking on the test split");
    std::string importance_out;
    int importance_stride = 5;
    importance->add_option("model", model_name, "svae, rot or timing")->required()->check(
        CLI::IsMember({"svae", "rot", "timing"}));
    importance->add_option("--checkpoint", checkpoint_flag, "Checkpoint (default: <output>/models/<model>.ckpt)");
    importance->add_option("--corpus", corpus_flag, "Corpus directory");
    importance->add_option("--window-stride", importance_stride, "Frames between analysed windows")
        ->check(CLI::PositiveNumber);
    importance->add_option("--out", importance_out, "CSV (default: <output>/reports/<model>_importance.csv)");

    auto* simulate = app.add_subcommand("simulate", "Closed-loop handover episodes from a scenario file");
    std::string scenario_path;
    std::string timing_ckpt;
    std::string svae_ckpt;
    std::string simulate_out;
    std::optional<int> ticks;
    simulate->add_option("--scenario", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
    simulate->add_option("--timing-checkpoint", timing_ckpt, "Timing checkpoint for the hands controller");
    simulate->add_option("--svae-checkpoint", svae_ckpt, "SVAE checkpoint for the hands controller");
    simulate->add_option("--ticks", ticks, "Ticks per episode (overrides the scenario)")->check(CLI::PositiveNumber);
    simulate->add_option("--out", simulate_out, "Episode directory (default: <output>/episodes)");

    auto* stats = app.add_subcommand("stats", "Handover duration and location statistics");
    std::string stats_out;
    stats->add_option("--corpus", corpus_flag, "Corpus directory");
    stats->add_option("--out", stats_out, "Output directory (default: <output>/stats)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    if (g.quiet) set_log_level(LogLevel::Warning);
    try {
        RunConfig config = resolve_config(g);
        const fs::path root = config.resolved_output_dir();
        const fs::path corpus = or_default(corpus_flag, config.resolved_corpus_dir());

        if (synth->parsed()) {
            if (synth_total) set_total_clips(config.data.synth, *synth_total);
            if (synth_pairs) config.data.synth.pair_count = *synth_pairs;
            cmd_synth_data(config, or_default(synth_out, config.resolved_corpus_dir()), out);
        } else if (train->parsed()) {
            const ModelKind model = parse_model_kind(model_name);
            if (epochs) {
                config.svae.stage1_epochs = *epochs;
                config.rot.epochs = *epochs;
                config.timing.epochs = *epochs;
            }
            if (stage2_epochs) {
                config.svae.stage2_epochs = *stage2_epochs;
                config.svae.stage2_kl_only_epochs = std::min(config.svae.stage2_kl_only_epochs, *stage2_epochs);
            }
            if (train_stride) {
                config.rot.window_stride = *train_stride;
                config.timing.window_stride = *train_stride;
            }
            cmd_train(model, config, corpus, or_default(train_out, root / "models"), out);
        } else if (eval->parsed()) {
            const ModelKind model = parse_model_kind(model_name);
            const std::string name(to_string(model));
            cmd_eval(model, or_default(checkpoint_flag, root / "models" / (name + ".ckpt")), config, corpus,
                     parse_split(split_name), or_default(eval_out, root / "reports" / (name + "_" + split_name + ".csv")),
                     out);
        } else if (importance->parsed()) {
            const ModelKind model = parse_model_kind(model_name);
            const std::string name(to_string(model));
            cmd_importance(model, or_default(checkpoint_flag, root / "models" / (name + ".ckpt")), config, corpus,
                           importance_stride, or_default(importance_out, root / "reports" / (name + "_importance.csv")),
                           out);
        } else if (simulate->parsed()) {
            std::ifstream is(scenario_path);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(is);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("scenario '" + scenario_path + "': " + e.what());
            }
            Scenario scenario = parse_scenario(j, config);
            if (ticks) scenario.ticks = *ticks;
            cmd_simulate(scenario, config, timing_ckpt, svae_ckpt, or_default(simulate_out, root / "episodes"), out);
        } else if (stats->parsed()) {
            cmd_stats(corpus, or_default(stats_out, root / "stats"), out);
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace handover::cli
