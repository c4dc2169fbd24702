#include "handover/config.hpp"

#include <cstdlib>
#include <fstream>

#include "handover/error.hpp"
#include "json_util.hpp"

namespace handover {

void set_total_clips(SynthConfig& synth, int total) {
    synth.activity_counts = SynthConfig::with_total(total).activity_counts;
}

void to_json(nlohmann::json& j, const DataConfig& c) {
    const auto& s = c.synth;
    j = nlohmann::json{{"activity_counts", s.activity_counts},
                       {"pair_count", s.pair_count},
                       {"fps", s.fps},
                       {"duration_mean", s.duration_mean},
                       {"duration_std", s.duration_std},
                       {"angle_noise", s.angle_noise},
                       {"ee_noise", s.ee_noise},
                       {"test_pairs", c.test_pairs},
                       {"corpus_dir", c.corpus_dir}};
}

void from_json(const nlohmann::json& j, DataConfig& c) {
    constexpr std::string_view s = "data";
    detail::reject_unknown_keys(j,
                                {"total_clips", "activity_counts", "pair_count", "fps", "duration_mean",
                                 "duration_std", "angle_noise", "ee_noise", "test_pairs", "corpus_dir"},
                                s);
    if (j.contains("total_clips") && j.contains("activity_counts"))
        throw ConfigError("data: give either total_clips or activity_counts, not both");
    if (j.contains("total_clips")) {
        int total = 0;
        detail::read_key(j, "total_clips", total, s);
        if (total < 0) throw ConfigError("data: total_clips must be non-negative");
        set_total_clips(c.synth, total);
    }
    detail::read_key(j, "activity_counts", c.synth.activity_counts, s);
    detail::read_key(j, "pair_count", c.synth.pair_count, s);
    detail::read_key(j, "fps", c.synth.fps, s);
    detail::read_key(j, "duration_mean", c.synth.duration_mean, s);
    detail::read_key(j, "duration_std", c.synth.duration_std, s);
    detail::read_key(j, "angle_noise", c.synth.angle_noise, s);
    detail::read_key(j, "ee_noise", c.synth.ee_noise, s);
    detail::read_key(j, "test_pairs", c.test_pairs, s);
    detail::read_key(j, "corpus_dir", c.corpus_dir, s);
}

void RunConfig::validate() const {
    data.synth.validate();
    for (int p : data.test_pairs)
        if (p < 0 || p >= data.synth.pair_count)
            throw ConfigError("data: test pair " + std::to_string(p) + " is outside [0, pair_count)");
    svae.validate();
    rot.validate();
    timing.validate();
    controller.validate();
}

void RunConfig::derive_seeds() {
    svae.seed = derive_seed(seed, "svae");
    rot.seed = derive_seed(seed, "rot");
    timing.seed = derive_seed(seed, "timing");
}

std::filesystem::path RunConfig::resolved_output_dir() const {
    if (!output_dir.empty()) return output_dir;
    if (const char* home = std::getenv("HANDOVER_HOME"); home && *home) return home;
    return "handover_out";
}

std::filesystem::path RunConfig::resolved_corpus_dir() const {
    if (!data.corpus_dir.empty()) return data.corpus_dir;
    return resolved_output_dir() / "corpus";
}

void to_json(nlohmann::json& j, const RunConfig& c) {
    auto strip_seed = [](nlohmann::json x) {
        x.erase("seed");
        return x;
    };
    j = nlohmann::json{{"data", c.data},
                       {"svae", strip_seed(c.svae)},
                       {"rot", strip_seed(c.rot)},
                       {"timing", strip_seed(c.timing)},
                       {"controller", c.controller},
                       {"output_dir", c.output_dir},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    constexpr std::string_view s = "config";
    detail::reject_unknown_keys(j, {"data", "svae", "rot", "timing", "controller", "output_dir", "seed"}, s);
    for (const char* section : {"svae", "rot", "timing"})
        if (j.contains(section) && j.at(section).is_object() && j.at(section).contains("seed"))
            throw ConfigError(std::string(section) + ": seeds derive from the top-level seed; remove 'seed'");
    if (j.contains("data")) from_json(j.at("data"), c.data);
    if (j.contains("svae")) from_json(j.at("svae"), c.svae);
    if (j.contains("rot")) from_json(j.at("rot"), c.rot);
    if (j.contains("timing")) from_json(j.at("timing"), c.timing);
    if (j.contains("controller")) from_json(j.at("controller"), c.controller);
    detail::read_key(j, "output_dir", c.output_dir, s);
    detail::read_key(j, "seed", c.seed, s);
    c.derive_seeds();
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path.string() + "': " + e.what());
    }
    RunConfig c = std::move(base);
    from_json(j, c);
    c.validate();
    return c;
}

RunConfig paper_preset() {
    RunConfig c;
    c.derive_seeds();
    return c;
}

RunConfig desk_preset() {
    RunConfig c;
    c.data.synth = SynthConfig::with_total(200);
    c.data.synth.pair_count = 10;
    c.data.test_pairs = {8, 9};

    c.svae.latent_dim = 16;
    c.svae.hidden_dim = 128;
    c.svae.embed_dim = 32;
    c.svae.stage1_epochs = 60;
    c.svae.stage2_epochs = 40;
    c.svae.stage2_kl_only_epochs = 20;
    c.svae.lr_start = 1e-3;
    c.svae.lr_end = 1e-5;
    c.svae.lr_decay_start_epoch = 20;
    c.svae.sched_sampling_ramp_epochs = 30;
    c.svae.recon_only_epochs = 5;

    c.rot.latent_dim = 16;
    c.rot.hidden_dim = 128;
    c.rot.embed_dim = 32;
    c.rot.epochs = 60;
    c.rot.lr_start = 1e-3;
    c.rot.lr_end = 1e-5;
    c.rot.lr_decay_start_epoch = 20;
    c.rot.window_stride = 2;

    c.timing.epochs = 100;
    c.timing.lr_start = 1e-3;
    c.timing.lr_end = 1e-5;
    c.timing.lr_decay_start_epoch = 30;
    c.timing.window_stride = 4;

    c.derive_seeds();
    return c;
}

}  // namespace handover
