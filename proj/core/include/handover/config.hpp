#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "handover/controller.hpp"
#include "handover/rot.hpp"
#include "handover/svae.hpp"
#include "handover/synth.hpp"
#include "handover/timing.hpp"

namespace handover {

struct DataConfig {
    SynthConfig synth = SynthConfig::with_total(200);
    std::vector<int> test_pairs{10, 11};
    std::string corpus_dir;  // empty: <output_dir>/corpus
};

// Replaces the per-activity counts with `total` clips spread round-robin,
// keeping every other synthesis setting.
void set_total_clips(SynthConfig& synth, int total);

void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);

// One document configures every command. Module seeds are not set
// directly: each is derive_seed(seed, "<section>").
struct RunConfig {
    DataConfig data;
    SvaeConfig svae;
    RotConfig rot;
    TimingConfig timing;
    ControllerConfig controller;
    std::string output_dir;  // empty: $HANDOVER_HOME, else ./handover_out
    std::uint64_t seed = 0;

    void validate() const;
    // Applies the sub-seed derivation to the module sections.
    void derive_seeds();
    std::filesystem::path resolved_output_dir() const;
    std::filesystem::path resolved_corpus_dir() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);  // unknown keys -> ConfigError

// Module defaults (full epoch counts and network sizes), seeds derived.
RunConfig paper_preset();
// Reduced sizes and epoch counts that train on one laptop core in minutes.
RunConfig desk_preset();

// Applies the document at `path` on top of `base`.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = paper_preset());

}  // namespace handover
