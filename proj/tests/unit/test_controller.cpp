#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "handover/controller.hpp"
#include "handover/error.hpp"

using namespace handover;

namespace {

HandsModels fixed_models(double likelihood, const Vec3& target, double step = 0.03) {
    HandsModels m;
    m.likelihood = [likelihood](const Eigen::MatrixXd&) { return likelihood; };
    // The robot features carry the end-effector position in their first
    // three columns.
    m.generate = [target, step](const Eigen::MatrixXd&, const Eigen::MatrixXd& r, HandoverState) {
        const Vec3 ee = r.bottomRows<1>().leftCols<3>().transpose();
        const Vec3 d = target - ee;
        return Vec3(d.norm() <= step ? target : Vec3(ee + d.normalized() * step));
    };
    return m;
}

bool same_log(const EpisodeLog& a, const EpisodeLog& b) {
    if (a.ticks.size() != b.ticks.size()) return false;
    for (std::size_t k = 0; k < a.ticks.size(); ++k)
        if (a.ticks[k].ee != b.ticks[k].ee || a.ticks[k].user_hand != b.ticks[k].user_hand ||
            a.ticks[k].status != b.ticks[k].status)
            return false;
    return a.outcome.completed == b.outcome.completed && a.outcome.completion_tick == b.outcome.completion_tick &&
           a.outcome.mean_jerk == b.outcome.mean_jerk;
}

}  // namespace

TEST_SUITE("controller") {
    TEST_CASE("Kalman filter converges on a stationary target") {
        const KalmanConfig cfg;
        const Vec3 target(0.3, 0.2, 0.1);
        KalmanState s = kalman_init(Vec3::Zero(), cfg);
        Vec3 prediction = Vec3::Zero();
        for (int t = 0; t < 50; ++t) {
            const auto k = kalman_step(s, target, cfg, 0.04);
            s = k.state;
            prediction = k.prediction;
        }
        CHECK((prediction - target).norm() < 1e-3);
    }

    TEST_CASE("Kalman filter tracks constant velocity exactly once converged") {
        const KalmanConfig cfg;
        const double dt = 0.04;
        const Vec3 p0(-0.2, 0.5, 0.3), v(0.1, -0.05, 0.2);
        KalmanState s = kalman_init(p0, cfg);
        double worst_late = 0.0;
        for (int t = 1; t <= 200; ++t) {
            const auto k = kalman_step(s, p0 + v * (t * dt), cfg, dt);
            s = k.state;
            if (t > 150) worst_late = std::max(worst_late, (k.prediction - (p0 + v * ((t + 1) * dt))).norm());
        }
        CHECK(worst_late < 1e-3);
    }

    TEST_CASE("noise-free filter with a perfect start is exact") {
        KalmanConfig cfg;
        cfg.process_noise = 0.0;
        cfg.measurement_noise = 0.0;
        cfg.initial_variance = 0.0;
        const double dt = 0.04;
        const Vec3 p0(0.1, 0.2, 0.3), v(0.5, 0.0, -0.25);
        KalmanState s = kalman_init(p0, cfg, v);
        for (int t = 1; t <= 30; ++t) {
            const auto k = kalman_step(s, p0 + v * (t * dt), cfg, dt);
            s = k.state;
            CHECK((k.prediction - (p0 + v * ((t + 1) * dt))).norm() < 1e-12);
        }
        CHECK_THROWS_AS(kalman_step(s, Vec3(std::nan(""), 0, 0), cfg, dt), NumericError);
    }

    TEST_CASE("Kalman covariance stays symmetric positive semi-definite") {
        const KalmanConfig cfg;
        Rng rng(9);
        KalmanState s = kalman_init(Vec3::Zero(), cfg);
        for (int t = 0; t < 300; ++t) {
            const Vec3 z(0.3 * std::sin(0.1 * t) + 0.01 * standard_normal(rng), 0.01 * standard_normal(rng),
                         0.2 + 0.01 * standard_normal(rng));
            s = kalman_step(s, z, cfg, 0.04).state;
            CHECK((s.P - s.P.transpose()).norm() < 1e-12);
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(s.P);
            CHECK(es.eigenvalues().minCoeff() >= -1e-9);
        }
    }

    TEST_CASE("baseline stays put until the hand enters a region") {
        const ControllerConfig cfg;
        BaselineState st;
        const Vec3 outside(1.5, 0.0, 2.0);
        REQUIRE_FALSE(cfg.activation_regions.front().contains(outside));
        Vec3 ee = cfg.robot_rest;
        for (int t = 0; t < 100; ++t) {
            const auto r = baseline_step(cfg, st, outside, ee);
            CHECK(r.next_ee == cfg.robot_rest);
            CHECK(r.status == ControllerStatus::Idle);
            CHECK_FALSE(r.handover_detected);
            ee = r.next_ee;
        }
    }

    TEST_CASE("baseline approaches a static hand and stops at the threshold") {
        const ControllerConfig cfg;
        BaselineState st;
        const Vec3 hand(-0.2, 0.3, 0.4);
        REQUIRE(cfg.activation_regions.front().contains(hand));
        Vec3 ee = hand + Vec3(0.6, 0.0, -0.8);
        double dist = (ee - hand).norm();
        REQUIRE(dist == doctest::Approx(1.0));
        int ticks = 0;
        ControllerStatus status = ControllerStatus::Idle;
        while (status != ControllerStatus::Reached && ticks < 500) {
            const auto r = baseline_step(cfg, st, hand, ee);
            CHECK((r.next_ee - ee).norm() <= cfg.speed_cap * cfg.dt() + 1e-12);
            const double d = (r.next_ee - hand).norm();
            CHECK(d <= dist + 1e-12);
            dist = d;
            ee = r.next_ee;
            status = r.status;
            ++ticks;
        }
        CHECK(status == ControllerStatus::Reached);
        CHECK(std::abs(dist - 0.12) <= 0.005);
        for (int t = 0; t < 20; ++t) {
            const auto r = baseline_step(cfg, st, hand, ee);
            CHECK(r.next_ee == ee);
            CHECK(r.status == ControllerStatus::Reached);
        }
    }

    TEST_CASE("hands controller needs a full second of history") {
        const ControllerConfig cfg;
        HandsState st;
        const auto models = fixed_models(1.0, Vec3::Zero());
        const Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(153);
        for (int t = 0; t < cfg.T; ++t) hands_observe(cfg, st, f, cfg.robot_rest, Mat3::Identity());
        CHECK(st.primary.size() == static_cast<std::size_t>(cfg.T));
        HandsState fresh;
        CHECK_THROWS_AS(hands_step(cfg, models, fresh, HandoverState::HandingOver, f, Vec3::Zero(), cfg.robot_rest,
                                   Mat3::Identity()),
                        TooShortError);
        CHECK_NOTHROW(hands_step(cfg, models, st, HandoverState::HandingOver, f, Vec3(1, 1, 1), cfg.robot_rest,
                                 Mat3::Identity()));
        CHECK(st.primary.size() == static_cast<std::size_t>(cfg.T + 1));
    }

    TEST_CASE("hands controller holds while the timing model says no") {
        const ControllerConfig cfg;
        const auto models = fixed_models(0.0, Vec3(0.0, 0.3, 0.4));
        const auto log = run_episode(ControllerKind::Hands, cfg, AgentScript{}, 150, &models);
        REQUIRE(log.ticks.size() == 150);
        for (const auto& t : log.ticks) {
            CHECK(t.ee == cfg.robot_rest);
            CHECK_FALSE(t.handover_detected);
        }
        CHECK_FALSE(log.outcome.completed);
        CHECK(log.outcome.path_length == 0.0);
    }

    TEST_CASE("hands controller follows the generator once triggered") {
        const ControllerConfig cfg;
        const Vec3 hand(-0.1, 0.3, 0.45);
        HandsState st;
        const Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(153);
        for (int t = 0; t < cfg.T; ++t) hands_observe(cfg, st, f, cfg.robot_rest, Mat3::Identity());
        auto models = fixed_models(0.9, hand);
        Vec3 ee = cfg.robot_rest;
        StepResult r;
        int ticks = 0;
        do {
            r = hands_step(cfg, models, st, HandoverState::HandingOver, f, hand, ee, Mat3::Identity());
            ee = r.next_ee;
            // The decision is latched after the first positive tick.
            models.likelihood = [](const Eigen::MatrixXd&) { return 0.0; };
            ++ticks;
        } while (!st.reached && ticks < 200);
        CHECK(st.reached);
        CHECK((ee - hand).norm() <= cfg.stop_distance);
        const auto held = hands_step(cfg, models, st, HandoverState::HandingOver, f, hand, ee, Mat3::Identity());
        CHECK(held.status == ControllerStatus::Reached);
        CHECK(held.next_ee == ee);
    }

    TEST_CASE("episodes: empty, completed and deterministic") {
        const ControllerConfig cfg;
        const AgentScript script;
        const auto empty = run_episode(ControllerKind::Baseline, cfg, script, 0);
        CHECK(empty.ticks.empty());
        CHECK_FALSE(empty.outcome.completed);
        CHECK(episode_jsonl(empty).empty());

        const auto a = run_episode(ControllerKind::Baseline, cfg, script, 250);
        CHECK(a.outcome.completed);
        CHECK(a.outcome.completion_tick >= 0);
        CHECK(a.outcome.final_distance <= cfg.stop_distance);
        CHECK(a.ticks.size() == static_cast<std::size_t>(a.outcome.completion_tick + 1));
        CHECK(same_log(a, run_episode(ControllerKind::Baseline, cfg, script, 250)));

        const auto frames = agent_frames(script, 250);
        const auto models = fixed_models(1.0, frames.back().hand);
        const auto h1 = run_episode(ControllerKind::Hands, cfg, script, 250, &models);
        const auto h2 = run_episode(ControllerKind::Hands, cfg, script, 250, &models);
        CHECK(same_log(h1, h2));
        for (int t = 0; t < cfg.T; ++t) CHECK(h1.ticks[static_cast<std::size_t>(t)].status == ControllerStatus::Buffering);
        if (h1.outcome.completed) CHECK(h1.outcome.final_distance <= cfg.stop_distance);

        const std::string jsonl = episode_jsonl(a);
        CHECK(static_cast<std::size_t>(std::count(jsonl.begin(), jsonl.end(), '\n')) == a.ticks.size());
        CHECK(jsonl.find("\"controller_state\"") != std::string::npos);
        const std::string csv = episode_summary_csv({{"a", a}, {"empty", empty}});
        CHECK(csv.rfind("episode,completed,completion_tick,final_distance_m,path_length_m,mean_jerk_m\n", 0) == 0);
        CHECK_THROWS(run_episode(ControllerKind::Hands, cfg, script, 10));
    }

    TEST_CASE("mean jerk is the mean third difference") {
        std::vector<Vec3> line, cubic;
        for (int t = 0; t < 10; ++t) {
            line.push_back(Vec3(0.1 * t, 0.0, -0.2 * t));
            cubic.push_back(Vec3(std::pow(t, 3), 0.0, 0.0));
        }
        CHECK(mean_jerk(line) == doctest::Approx(0.0));
        CHECK(mean_jerk(cubic) == doctest::Approx(6.0));
        CHECK(mean_jerk({Vec3::Zero(), Vec3::Ones()}) == 0.0);
    }

    TEST_CASE("configuration validation") {
        ControllerConfig c;
        c.stop_distance = 0.0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = ControllerConfig{};
        c.activation_regions.clear();
        CHECK_THROWS_AS(c.validate(), ConfigError);
        nlohmann::json j = ControllerConfig{};
        j["bogus"] = 1;
        CHECK_THROWS_AS(j.get<ControllerConfig>(), ConfigError);
    }
}
