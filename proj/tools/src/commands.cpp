#include "handover_cli/commands.hpp"

#include <fstream>
#include <ostream>

#include "handover/analysis.hpp"
#include "handover/checkpoint.hpp"
#include "handover/error.hpp"
#include "handover/log.hpp"
#include "handover/rng.hpp"

namespace handover::cli {

namespace fs = std::filesystem;

std::string_view to_string(ModelKind m) {
    switch (m) {
        case ModelKind::Svae: return "svae";
        case ModelKind::Rot: return "rot";
        case ModelKind::Timing: return "timing";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view text) {
    if (text == "svae") return ModelKind::Svae;
    if (text == "rot") return ModelKind::Rot;
    if (text == "timing") return ModelKind::Timing;
    throw ConfigError("unknown model '" + std::string(text) + "' (expected svae, rot or timing)");
}

SplitKind parse_split(std::string_view text) {
    if (text == "train") return SplitKind::Train;
    if (text == "test") return SplitKind::Test;
    if (text == "all") return SplitKind::All;
    throw ConfigError("unknown split '" + std::string(text) + "' (expected train, test or all)");
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << text;
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

Corpus load_existing_corpus(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json"))
        throw IoError("no corpus at '" + dir.string() + "' (run synth-data first)");
    return load_corpus(dir);
}

Corpus select_split(const Corpus& corpus, const RunConfig& config, SplitKind split) {
    if (split == SplitKind::All) return corpus;
    auto halves = participant_split(corpus, config.data.test_pairs);
    return split == SplitKind::Train ? std::move(halves.train) : std::move(halves.test);
}

void check_compatible(std::string_view what, Eigen::Index model_width, int model_T, const Corpus& corpus,
                      int config_T) {
    const auto width = static_cast<Eigen::Index>(primary_feature_width(corpus.skeleton->size()));
    if (model_width != width)
        throw ConsistencyError(std::string(what) + " checkpoint expects primary width " +
                               std::to_string(model_width) + ", corpus has " + std::to_string(width));
    if (model_T != config_T)
        throw ConsistencyError(std::string(what) + " checkpoint was trained with T=" + std::to_string(model_T) +
                               ", config has T=" + std::to_string(config_T));
}

EpochCallback printer(std::ostream& out) {
    return [&out](const std::string& line) { out << line << '\n' << std::flush; };
}

}  // namespace

CorpusSummary cmd_synth_data(const RunConfig& config, const fs::path& out_dir, std::ostream& out) {
    config.data.synth.validate();
    const Corpus corpus = synth_corpus(config.data.synth, derive_seed(config.seed, "data"));
    save_corpus(corpus, out_dir);
    const CorpusSummary s = summarize(corpus);
    out << "corpus " << out_dir.string() << '\n'
        << "clips " << s.clips << '\n'
        << "frames " << s.frames << '\n'
        << "segments " << s.segments << '\n'
        << "pairs " << s.pair_ids.size() << '\n';
    return s;
}

TrainOutcome cmd_train(ModelKind model, const RunConfig& config, const fs::path& corpus_dir, const fs::path& out_dir,
                       std::ostream& out) {
    switch (model) {
        case ModelKind::Svae: config.svae.validate(); break;
        case ModelKind::Rot: config.rot.validate(); break;
        case ModelKind::Timing: config.timing.validate(); break;
    }
    const Corpus corpus = load_existing_corpus(corpus_dir);
    const CorpusSplit split = participant_split(corpus, config.data.test_pairs);
    out << "training " << to_string(model) << " on " << split.train.clips.size() << " clips ("
        << split.test.clips.size() << " held out)\n";

    TrainOutcome result;
    result.checkpoint = out_dir / (std::string(to_string(model)) + ".ckpt");
    result.log = out_dir / (std::string(to_string(model)) + "_log.csv");
    Checkpoint checkpoint;
    std::string log_csv;
    switch (model) {
        case ModelKind::Svae: {
            auto trained = train_stage1(split.train, config.svae, printer(out));
            auto stage2 = train_stage2(trained.model, split.train, printer(out));
            trained.log.insert(trained.log.end(), stage2.begin(), stage2.end());
            result.final_loss = trained.log.empty() ? 0.0 : trained.log.back().loss;
            result.log_rows = trained.log.size();
            checkpoint = svae_checkpoint(trained.model, trained.log);
            log_csv = svae_log_csv(trained.log);
            break;
        }
        case ModelKind::Rot: {
            auto trained = train_rot(split.train, config.rot, printer(out));
            result.final_loss = trained.log.empty() ? 0.0 : trained.log.back().loss;
            result.log_rows = trained.log.size();
            checkpoint = rot_checkpoint(trained.model, trained.log);
            log_csv = rot_log_csv(trained.log);
            break;
        }
        case ModelKind::Timing: {
            auto trained = train_timing(split.train, config.timing, printer(out));
            result.final_loss = trained.log.empty() ? 0.0 : trained.log.back().loss;
            result.log_rows = trained.log.size();
            checkpoint = timing_checkpoint(trained.model, trained.log);
            log_csv = timing_log_csv(trained.log);
            break;
        }
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
    write_checkpoint(result.checkpoint, checkpoint);
    write_text(result.log, log_csv);
    out << "checkpoint " << result.checkpoint.string() << '\n'
        << "log " << result.log.string() << '\n'
        << "final_loss " << format_double(result.final_loss) << '\n';
    return result;
}

std::string cmd_eval(ModelKind model, const fs::path& checkpoint_path, const RunConfig& config,
                     const fs::path& corpus_dir, SplitKind split, const fs::path& out_csv, std::ostream& out) {
    const Checkpoint checkpoint = read_checkpoint(checkpoint_path);
    const Corpus corpus = select_split(load_existing_corpus(corpus_dir), config, split);
    std::string csv;
    switch (model) {
        case ModelKind::Svae: {
            const SvaeModel m = svae_from_checkpoint(checkpoint);
            check_compatible("svae", m.primary_width(), m.config().T, corpus, config.svae.T);
            csv = svae_report_csv(evaluate_svae(m, corpus));
            break;
        }
        case ModelKind::Rot: {
            const RotModel m = rot_from_checkpoint(checkpoint);
            check_compatible("rot", m.primary_width(), m.config().T, corpus, config.rot.T);
            csv = rot_report_csv(evaluate_rot(m, corpus));
            break;
        }
        case ModelKind::Timing: {
            const TimingModel m = timing_from_checkpoint(checkpoint);
            const int T = m.config().T;
            check_compatible("timing", m.input_width() / (T + 1), T, corpus, config.timing.T);
            csv = accuracy_report_csv(accuracy_report(m, corpus, config.timing.window_stride));
            break;
        }
    }
    write_text(out_csv, csv);
    out << csv;
    return csv;
}

std::string cmd_importance(ModelKind model, const fs::path& checkpoint_path, const RunConfig& config,
                           const fs::path& corpus_dir, int window_stride, const fs::path& out_csv, std::ostream& out) {
    if (window_stride < 1) throw ConfigError("importance: window stride must be >= 1");
    const Checkpoint checkpoint = read_checkpoint(checkpoint_path);
    const Corpus corpus = select_split(load_existing_corpus(corpus_dir), config, SplitKind::Test);
    SensitivityGraph graph;
    int T = 0;
    std::optional<SvaeModel> svae;
    std::optional<RotModel> rot;
    std::optional<TimingModel> timing;
    switch (model) {
        case ModelKind::Svae:
            svae.emplace(svae_from_checkpoint(checkpoint));
            check_compatible("svae", svae->primary_width(), svae->config().T, corpus, svae->config().T);
            graph = svae_sensitivity(*svae);
            T = svae->config().T;
            break;
        case ModelKind::Rot:
            rot.emplace(rot_from_checkpoint(checkpoint));
            check_compatible("rot", rot->primary_width(), rot->config().T, corpus, rot->config().T);
            graph = rot_sensitivity(*rot);
            T = rot->config().T;
            break;
        case ModelKind::Timing:
            timing.emplace(timing_from_checkpoint(checkpoint));
            graph = timing_sensitivity(*timing);
            T = timing->config().T;
            break;
    }
    std::vector<MotionWindow> windows;
    for (const auto& clip : corpus.clips) {
        auto w = make_windows(clip, T, window_stride);
        windows.insert(windows.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    if (windows.empty()) throw TooShortError("importance: no windows in the held-out corpus");
    const auto table = joint_importance(graph, windows, *corpus.skeleton);
    const std::string csv = importance_csv(table);
    write_text(out_csv, csv);
    out << "windows " << windows.size() << '\n' << csv;
    return csv;
}

Scenario parse_scenario(const nlohmann::json& j, const RunConfig& config) {
    const auto reject = [](const nlohmann::json& obj, std::initializer_list<std::string_view> keys,
                           const std::string& where) {
        if (!obj.is_object()) throw ConfigError(where + ": expected an object");
        for (const auto& [key, value] : obj.items()) {
            bool known = false;
            for (auto k : keys) known = known || key == k;
            if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
        }
    };
    reject(j, {"ticks", "episodes"}, "scenario");
    Scenario s;
    try {
        if (j.contains("ticks")) s.ticks = j.at("ticks").get<int>();
        if (s.ticks < 1) throw ConfigError("scenario: ticks must be >= 1");
        if (!j.contains("episodes") || !j.at("episodes").is_array() || j.at("episodes").empty())
            throw ConfigError("scenario: 'episodes' must be a non-empty array");
        std::size_t index = 0;
        for (const auto& e : j.at("episodes")) {
            const std::string where = "scenario.episodes[" + std::to_string(index) + "]";
            reject(e, {"name", "controller", "activity", "kind", "pair_id", "cue_time", "seed", "transfer_point"},
                   where);
            Scenario::Episode ep;
            ep.name = e.value("name", "episode_" + std::to_string(index));
            const std::string controller = e.value("controller", "baseline");
            if (controller == "baseline")
                ep.controller = ControllerKind::Baseline;
            else if (controller == "hands")
                ep.controller = ControllerKind::Hands;
            else
                throw ConfigError(where + ": controller must be 'baseline' or 'hands'");
            ep.script.synth = config.data.synth;
            if (e.contains("activity")) ep.script.activity = parse_activity(e.at("activity").get<std::string>());
            if (e.contains("kind")) ep.script.kind = parse_handover_state(e.at("kind").get<std::string>());
            ep.script.pair_id = e.value("pair_id", 0);
            ep.script.cue_time = e.value("cue_time", ep.script.cue_time);
            ep.script.seed = e.contains("seed") ? e.at("seed").get<std::uint64_t>()
                                                : derive_seed(config.seed, "simulate", index);
            if (e.contains("transfer_point")) {
                const auto p = e.at("transfer_point").get<std::vector<double>>();
                if (p.size() != 3) throw ConfigError(where + ": transfer_point must have 3 entries");
                ep.script.transfer_point = Vec3(p[0], p[1], p[2]);
            }
            s.episodes.push_back(std::move(ep));
            ++index;
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("scenario: ") + ex.what());
    } catch (const LookupError& ex) {
        throw ConfigError(std::string("scenario: ") + ex.what());
    } catch (const SchemaError& ex) {
        throw ConfigError(std::string("scenario: ") + ex.what());
    }
    return s;
}

std::vector<std::pair<std::string, EpisodeLog>> cmd_simulate(const Scenario& scenario, const RunConfig& config,
                                                             const fs::path& timing_checkpoint,
                                                             const fs::path& svae_checkpoint,
                                                             const fs::path& out_dir, std::ostream& out) {
    config.controller.validate();
    std::optional<TimingModel> timing;
    std::optional<SvaeModel> svae;
    std::optional<HandsModels> models;
    for (const auto& ep : scenario.episodes) {
        if (ep.controller != ControllerKind::Hands || models) continue;
        if (timing_checkpoint.empty() || svae_checkpoint.empty())
            throw ConfigError("simulate: the hands controller needs --timing-checkpoint and --svae-checkpoint");
        timing.emplace(timing_from_checkpoint(read_checkpoint(timing_checkpoint)));
        svae.emplace(svae_from_checkpoint(read_checkpoint(svae_checkpoint)));
        if (timing->config().T != config.controller.T || svae->config().T != config.controller.T)
            throw ConsistencyError("simulate: checkpoint window T does not match controller.T");
        models = bind_models(*timing, *svae);
    }
    std::vector<std::pair<std::string, EpisodeLog>> episodes;
    for (const auto& ep : scenario.episodes) {
        EpisodeLog log = run_episode(ep.controller, config.controller, ep.script, scenario.ticks,
                                     models ? &*models : nullptr);
        write_text(out_dir / (ep.name + ".jsonl"), episode_jsonl(log));
        out << ep.name << (log.outcome.completed ? " completed" : " incomplete") << " ticks " << log.ticks.size()
            << " final_distance " << format_double(log.outcome.final_distance) << '\n';
        episodes.emplace_back(ep.name, std::move(log));
    }
    write_text(out_dir / "summary.csv", episode_summary_csv(episodes));
    return episodes;
}

HandoverStats cmd_stats(const fs::path& corpus_dir, const fs::path& out_dir, std::ostream& out) {
    const Corpus corpus = load_existing_corpus(corpus_dir);
    const HandoverStats stats = handover_stats(corpus);
    write_text(out_dir / "summary.csv", stats_summary_csv(stats));
    write_text(out_dir / "points.csv", stats_points_csv(stats));
    write_text(out_dir / "locations.svg", stats_svg(stats));
    out << "segments " << stats.segments << '\n'
        << "duration_mean_s " << format_double(stats.duration_mean) << '\n'
        << "duration_std_s " << format_double(stats.duration_std) << '\n';
    return stats;
}

}  // namespace handover::cli
