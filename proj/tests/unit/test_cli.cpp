#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "fixtures.hpp"
#include "handover/error.hpp"
#include "handover_cli/commands.hpp"

using namespace handover;
using namespace handover::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;

    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("handover_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

RunConfig small_config() {
    RunConfig c = desk_preset();
    set_total_clips(c.data.synth, 13);
    c.data.synth.pair_count = 4;
    c.data.test_pairs = {3};
    c.svae = fixture::tiny_svae();
    c.timing = fixture::tiny_timing();
    c.rot.latent_dim = 2;
    c.rot.hidden_dim = 16;
    c.rot.embed_dim = 4;
    c.rot.attention_heads = 2;
    c.rot.T = 4;
    c.rot.epochs = 40;
    c.rot.lr_start = 3e-3;
    c.rot.lr_end = 1e-4;
    c.rot.lr_decay_start_epoch = 20;
    c.rot.window_stride = 3;
    c.controller.T = 4;
    c.seed = 17;
    c.derive_seeds();
    return c;
}

int run_args(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
    args.insert(args.begin(), "handover");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("run configuration round trips and rejects unknown keys") {
        const RunConfig c = small_config();
        const nlohmann::json j = c;
        const RunConfig back = j.get<RunConfig>();
        CHECK(nlohmann::json(back) == j);
        CHECK(back.svae.seed == c.svae.seed);
        CHECK(back.timing.seed == derive_seed(c.seed, "timing"));

        nlohmann::json bad = j;
        bad["svae"]["bogus"] = 1;
        CHECK_THROWS_AS(bad.get<RunConfig>(), ConfigError);
        bad = j;
        bad["extra"] = true;
        CHECK_THROWS_AS(bad.get<RunConfig>(), ConfigError);
        bad = j;
        bad["timing"]["seed"] = 3;
        CHECK_THROWS_AS(bad.get<RunConfig>(), ConfigError);
        bad = j;
        bad["data"]["activity_counts"] = std::vector<int>(13, 1);
        bad["data"]["total_clips"] = 13;
        CHECK_THROWS_AS(bad.get<RunConfig>(), ConfigError);
    }

    TEST_CASE("presets carry the published epoch counts") {
        const RunConfig p = paper_preset();
        CHECK(p.svae.stage1_epochs == 140);
        CHECK(p.rot.epochs == 250);
        CHECK(p.timing.epochs == 500);
        CHECK(p.timing.threshold == 0.6);
        CHECK(p.controller.stop_distance == 0.12);
        const RunConfig d = desk_preset();
        CHECK(d.svae.stage1_epochs == 60);
        CHECK_NOTHROW(d.validate());
    }

    TEST_CASE("config files layer over the preset") {
        TempDir dir("config");
        {
            std::ofstream f(dir.path / "run.json");
            f << R"({"seed": 99, "timing": {"epochs": 7}})";
        }
        const RunConfig c = load_run_config(dir.path / "run.json");
        CHECK(c.seed == 99);
        CHECK(c.timing.epochs == 7);
        CHECK(c.timing.seed == derive_seed(99, "timing"));
        CHECK(c.svae.stage1_epochs == 140);
        {
            std::ofstream f(dir.path / "broken.json");
            f << "{";
        }
        CHECK_THROWS_AS(load_run_config(dir.path / "broken.json"), ConfigError);
        CHECK_THROWS_AS(load_run_config(dir.path / "missing.json"), IoError);
    }

    TEST_CASE("exit codes") {
        TempDir dir("exit");
        std::string out, err;
        CHECK(run_args({"--help"}, &out) == 0);
        CHECK(out.find("synth-data") != std::string::npos);
        CHECK(run_args({"train", "--help"}, &out) == 0);
        CHECK(out.find("--epochs") != std::string::npos);
        CHECK(run_args({"train", "bogus"}, nullptr, &err) == 1);
        CHECK(run_args({"--preset", "huge", "stats"}, nullptr, &err) == 1);
        CHECK(run_args({}, nullptr, &err) == 1);
        CHECK(run_args({"-o", dir.path.string(), "stats"}, nullptr, &err) == 2);
        CHECK(err.rfind("error: ", 0) == 0);
        CHECK(run_args({"-o", dir.path.string(), "train", "timing", "--epochs", "0"}, nullptr, &err) == 1);
    }

    TEST_CASE("synthetic corpus generation is deterministic") {
        TempDir a("synth_a"), b("synth_b");
        const RunConfig c = small_config();
        std::ostringstream log;
        const auto summary = cmd_synth_data(c, a.path, log);
        CHECK(summary.clips == 13);
        CHECK(log.str().find("clips 13\n") != std::string::npos);
        cmd_synth_data(c, b.path, log);
        CHECK(tree(a.path) == tree(b.path));
        const Corpus back = load_corpus(a.path);
        CHECK(back.clips.size() == 13);

        std::string out;
        CHECK(run_args({"--preset", "desk", "--seed", "5", "-o", b.path.string(), "synth-data", "--total-clips", "26",
                        "--pair-count", "4"},
                       &out) == 0);
        CHECK(load_corpus(b.path / "corpus").clips.size() == 26);
    }

    TEST_CASE("train, eval, importance, simulate and stats") {
        TempDir dir("pipeline");
        const RunConfig c = small_config();
        std::ostringstream log;
        const fs::path corpus = dir.path / "corpus";
        cmd_synth_data(c, corpus, log);

        const auto timing = cmd_train(ModelKind::Timing, c, corpus, dir.path / "models", log);
        CHECK(timing.log_rows == static_cast<std::size_t>(c.timing.epochs));
        const std::string timing_log = slurp(timing.log);
        CHECK(std::count(timing_log.begin(), timing_log.end(), '\n') == c.timing.epochs + 1);
        std::ostringstream again;
        const auto timing2 = cmd_train(ModelKind::Timing, c, corpus, dir.path / "models2", again);
        CHECK(timing2.final_loss == timing.final_loss);
        const std::string text = again.str();
        const std::string last = text.substr(text.rfind("final_loss "));
        CHECK(last == "final_loss " + format_double(timing.final_loss) + "\n");

        // Published epoch counts reach the logs unchanged.
        RunConfig full = c;
        full.timing.epochs = paper_preset().timing.epochs;
        full.timing.window_stride = 25;
        full.svae.stage1_epochs = paper_preset().svae.stage1_epochs;
        full.svae.stage2_epochs = 1;
        full.svae.stage2_kl_only_epochs = 1;
        full.svae.chunk_stride = 200;
        CHECK(cmd_train(ModelKind::Timing, full, corpus, dir.path / "full", log).log_rows == 500);
        const auto full_svae = cmd_train(ModelKind::Svae, full, corpus, dir.path / "full", log);
        const std::string svae_log = slurp(full_svae.log);
        std::size_t stage1_rows = 0;
        for (std::size_t at = svae_log.find("\n1,"); at != std::string::npos; at = svae_log.find("\n1,", at + 1))
            ++stage1_rows;
        CHECK(stage1_rows == 140);

        const auto svae = cmd_train(ModelKind::Svae, c, corpus, dir.path / "models", log);
        CHECK(svae.log_rows == static_cast<std::size_t>(c.svae.stage1_epochs + c.svae.stage2_epochs));
        const auto rot = cmd_train(ModelKind::Rot, c, corpus, dir.path / "models", log);
        CHECK(rot.log_rows == static_cast<std::size_t>(c.rot.epochs));

        const std::string svae_csv =
            cmd_eval(ModelKind::Svae, svae.checkpoint, c, corpus, SplitKind::Test, dir.path / "svae.csv", log);
        CHECK(first_line(svae_csv) == "activity,windows,MAE_cm,MAE_std,trajectories,AR_MAE_cm,AR_MAE_std");
        CHECK(svae_csv == cmd_eval(ModelKind::Svae, svae.checkpoint, c, corpus, SplitKind::Test,
                                   dir.path / "svae2.csv", log));
        const std::string timing_csv =
            cmd_eval(ModelKind::Timing, timing.checkpoint, c, corpus, SplitKind::Test, dir.path / "timing.csv", log);
        CHECK(first_line(timing_csv) == "group,label,segments,segment_accuracy,windows,window_accuracy");

        // The RoT model memorises its training transfers.
        auto overall_mae = [](const std::string& csv) {
            const auto row = csv.substr(csv.rfind("overall,"));
            std::stringstream ss(row);
            std::string label, mae;
            std::getline(ss, label, ',');
            std::getline(ss, mae, ',');
            return parse_double(mae);
        };
        const std::string rot_test =
            cmd_eval(ModelKind::Rot, rot.checkpoint, c, corpus, SplitKind::Test, dir.path / "rot_test.csv", log);
        const std::string rot_train =
            cmd_eval(ModelKind::Rot, rot.checkpoint, c, corpus, SplitKind::Train, dir.path / "rot_train.csv", log);
        CHECK(first_line(rot_test) == "activity,MAE_cm,MAE_std,MEAE_rad,MEAE_std");
        CHECK(overall_mae(rot_train) < overall_mae(rot_test));

        RunConfig wrong = c;
        wrong.timing.T = 6;
        CHECK_THROWS_AS(cmd_eval(ModelKind::Timing, timing.checkpoint, wrong, corpus, SplitKind::Test,
                                 dir.path / "x.csv", log),
                        ConsistencyError);
        CHECK_THROWS(cmd_eval(ModelKind::Rot, timing.checkpoint, c, corpus, SplitKind::Test, dir.path / "y.csv", log));

        const std::string importance =
            cmd_importance(ModelKind::Timing, timing.checkpoint, c, corpus, 9, dir.path / "imp.csv", log);
        CHECK(std::count(importance.begin(), importance.end(), '\n') == 1 + 2 * 17);

        const auto scenario = parse_scenario(nlohmann::json::parse(R"({"ticks": 150, "episodes": [
            {"name": "base", "controller": "baseline", "activity": "hammer_nail", "seed": 3},
            {"name": "hands", "controller": "hands", "kind": "taking_back"}]})"),
                                             c);
        const auto episodes =
            cmd_simulate(scenario, c, timing.checkpoint, svae.checkpoint, dir.path / "episodes", log);
        REQUIRE(episodes.size() == 2);
        CHECK(fs::exists(dir.path / "episodes" / "base.jsonl"));
        CHECK(fs::exists(dir.path / "episodes" / "hands.jsonl"));
        const std::string summary = slurp(dir.path / "episodes" / "summary.csv");
        CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);
        CHECK_THROWS_AS(parse_scenario(nlohmann::json::parse(R"({"episodes": [{"colour": 1}]})"), c), ConfigError);
        CHECK_THROWS_AS(parse_scenario(nlohmann::json::parse(R"({"episodes": []})"), c), ConfigError);
        CHECK_THROWS_AS(cmd_simulate(scenario, c, {}, {}, dir.path / "episodes", log), ConfigError);

        const auto stats = cmd_stats(corpus, dir.path / "stats", log);
        CHECK(stats.segments == 13);
        for (const char* f : {"summary.csv", "points.csv", "locations.svg"}) CHECK(fs::exists(dir.path / "stats" / f));
    }
}
