#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "handover/analysis.hpp"
#include "handover/config.hpp"
#include "handover/controller.hpp"

namespace handover::cli {

enum class ModelKind { Svae, Rot, Timing };

std::string_view to_string(ModelKind m);
ModelKind parse_model_kind(std::string_view text);  // throws ConfigError

enum class SplitKind { Train, Test, All };

SplitKind parse_split(std::string_view text);  // throws ConfigError

// Corpus derived from config.data with derive_seed(seed, "data").
CorpusSummary cmd_synth_data(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& out);

struct TrainOutcome {
    std::filesystem::path checkpoint;
    std::filesystem::path log;
    double final_loss = 0.0;
    std::size_t log_rows = 0;
};

// Trains on the participant-split train half and writes <out>/<model>.ckpt
// and <out>/<model>_log.csv. The last line printed is "final_loss <value>".
TrainOutcome cmd_train(ModelKind model, const RunConfig& config, const std::filesystem::path& corpus_dir,
                       const std::filesystem::path& out_dir, std::ostream& out);

// Writes the report CSV and returns its text.
std::string cmd_eval(ModelKind model, const std::filesystem::path& checkpoint, const RunConfig& config,
                     const std::filesystem::path& corpus_dir, SplitKind split, const std::filesystem::path& out_csv,
                     std::ostream& out);

std::string cmd_importance(ModelKind model, const std::filesystem::path& checkpoint, const RunConfig& config,
                           const std::filesystem::path& corpus_dir, int window_stride,
                           const std::filesystem::path& out_csv, std::ostream& out);

// Scenario document: {"ticks": N, "episodes": [{"name", "controller",
// "activity", "kind", "pair_id", "cue_time", "seed", "transfer_point"}]}.
struct Scenario {
    struct Episode {
        std::string name;
        ControllerKind controller = ControllerKind::Baseline;
        AgentScript script;
    };
    int ticks = 200;
    std::vector<Episode> episodes;
};

Scenario parse_scenario(const nlohmann::json& j, const RunConfig& config);

// Writes <out>/<name>.jsonl per episode and <out>/summary.csv.
std::vector<std::pair<std::string, EpisodeLog>> cmd_simulate(const Scenario& scenario, const RunConfig& config,
                                                             const std::filesystem::path& timing_checkpoint,
                                                             const std::filesystem::path& svae_checkpoint,
                                                             const std::filesystem::path& out_dir,
                                                             std::ostream& out);

// Writes summary.csv, points.csv and locations.svg.
HandoverStats cmd_stats(const std::filesystem::path& corpus_dir, const std::filesystem::path& out_dir,
                        std::ostream& out);

// Full command line; returns the process exit code (0 ok, 1 usage, 2 runtime).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace handover::cli
