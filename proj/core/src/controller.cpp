#include "handover/controller.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "handover/error.hpp"
#include "json_util.hpp"

namespace handover {

bool Box::contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

Box default_activation_region() { return {Vec3(-0.45, 0.0, 0.0), Vec3(0.0, 0.8, 0.5)}; }

void ControllerConfig::validate() const {
    if (!(stop_distance > 0.0)) throw ConfigError("controller: stop_distance must be positive");
    if (!(approach_margin >= 0.0) || approach_margin >= stop_distance)
        throw ConfigError("controller: approach_margin must lie in [0, stop_distance)");
    if (!(tick_rate > 0.0) || !(speed_cap > 0.0)) throw ConfigError("controller: tick_rate and speed_cap must be positive");
    if (activation_regions.empty()) throw ConfigError("controller: at least one activation region is required");
    for (const auto& b : activation_regions)
        if ((b.min.array() > b.max.array()).any()) throw ConfigError("controller: activation region has min > max");
    if (!(kalman.process_noise >= 0.0) || !(kalman.measurement_noise >= 0.0) || !(kalman.initial_variance >= 0.0))
        throw ConfigError("controller: Kalman noise terms must be non-negative");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("controller: threshold must lie in [0, 1]");
    if (T <= 0) throw ConfigError("controller: T must be positive");
}

namespace {
nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
Vec3 vec_from(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(std::string("controller: ") + what + " must be [x, y, z]");
    try {
        return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("controller: ") + what + " must hold numbers");
    }
}
}  // namespace

void to_json(nlohmann::json& j, const ControllerConfig& c) {
    auto regions = nlohmann::json::array();
    for (const auto& b : c.activation_regions) regions.push_back({{"min", vec_json(b.min)}, {"max", vec_json(b.max)}});
    j = nlohmann::json{{"stop_distance", c.stop_distance},
                       {"approach_margin", c.approach_margin},
                       {"tick_rate", c.tick_rate},
                       {"speed_cap", c.speed_cap},
                       {"activation_regions", regions},
                       {"kalman",
                        {{"process_noise", c.kalman.process_noise},
                         {"measurement_noise", c.kalman.measurement_noise},
                         {"initial_variance", c.kalman.initial_variance}}},
                       {"robot_rest", vec_json(c.robot_rest)},
                       {"threshold", c.threshold},
                       {"T", c.T}};
}

void from_json(const nlohmann::json& j, ControllerConfig& c) {
    constexpr std::string_view s = "controller";
    detail::reject_unknown_keys(j,
                                {"stop_distance", "approach_margin", "tick_rate", "speed_cap", "activation_regions",
                                 "kalman", "robot_rest", "threshold", "T"},
                                s);
    detail::read_key(j, "stop_distance", c.stop_distance, s);
    detail::read_key(j, "approach_margin", c.approach_margin, s);
    detail::read_key(j, "tick_rate", c.tick_rate, s);
    detail::read_key(j, "speed_cap", c.speed_cap, s);
    detail::read_key(j, "threshold", c.threshold, s);
    detail::read_key(j, "T", c.T, s);
    if (j.contains("activation_regions")) {
        const auto& regions = j.at("activation_regions");
        if (!regions.is_array()) throw ConfigError("controller: activation_regions must be an array");
        c.activation_regions.clear();
        for (const auto& r : regions) {
            detail::reject_unknown_keys(r, {"min", "max"}, "controller.activation_regions");
            if (!r.contains("min") || !r.contains("max")) throw ConfigError("controller: region needs min and max");
            c.activation_regions.push_back({vec_from(r.at("min"), "region min"), vec_from(r.at("max"), "region max")});
        }
    }
    if (j.contains("kalman")) {
        const auto& k = j.at("kalman");
        detail::reject_unknown_keys(k, {"process_noise", "measurement_noise", "initial_variance"}, "controller.kalman");
        detail::read_key(k, "process_noise", c.kalman.process_noise, s);
        detail::read_key(k, "measurement_noise", c.kalman.measurement_noise, s);
        detail::read_key(k, "initial_variance", c.kalman.initial_variance, s);
    }
    if (j.contains("robot_rest")) c.robot_rest = vec_from(j.at("robot_rest"), "robot_rest");
}

// ---------------------------------------------------------------- Kalman

KalmanState kalman_init(const Vec3& position, const KalmanConfig& config, const Vec3& velocity) {
    KalmanState s;
    s.x << position, velocity;
    s.P = Eigen::Matrix<double, 6, 6>::Identity() * config.initial_variance;
    return s;
}

KalmanStep kalman_step(const KalmanState& state, const Vec3& measurement, const KalmanConfig& config, double dt) {
    if (!measurement.allFinite()) throw NumericError("kalman_step: non-finite measurement");
    using M6 = Eigen::Matrix<double, 6, 6>;
    M6 F = M6::Identity();
    F.topRightCorner<3, 3>() = Mat3::Identity() * dt;
    M6 Q = M6::Zero();
    const double q = config.process_noise;
    Q.topLeftCorner<3, 3>() = Mat3::Identity() * (q * dt * dt * dt / 3.0);
    Q.topRightCorner<3, 3>() = Mat3::Identity() * (q * dt * dt / 2.0);
    Q.bottomLeftCorner<3, 3>() = Mat3::Identity() * (q * dt * dt / 2.0);
    Q.bottomRightCorner<3, 3>() = Mat3::Identity() * (q * dt);

    Eigen::Matrix<double, 6, 1> x = F * state.x;
    M6 P = F * state.P * F.transpose() + Q;

    const Mat3 R = Mat3::Identity() * config.measurement_noise;
    const Mat3 S = P.topLeftCorner<3, 3>() + R;
    const Eigen::Matrix<double, 6, 3> PHt = P.leftCols<3>();
    const Mat3 S_inv = S.completeOrthogonalDecomposition().pseudoInverse();
    const Eigen::Matrix<double, 6, 3> K = PHt * S_inv;
    x += K * (measurement - x.head<3>());
    M6 IKH = M6::Identity();
    IKH.leftCols<3>() -= K;
    P = IKH * P * IKH.transpose() + K * R * K.transpose();
    P = 0.5 * (P + P.transpose()).eval();

    KalmanStep out;
    out.state.x = x;
    out.state.P = P;
    out.prediction = x.head<3>() + dt * x.tail<3>();
    return out;
}

std::string_view to_string(ControllerStatus s) {
    switch (s) {
        case ControllerStatus::Buffering:
            return "buffering";
        case ControllerStatus::Idle:
            return "idle";
        case ControllerStatus::Active:
            return "active";
        case ControllerStatus::Reached:
            return "reached";
    }
    return "idle";
}

// ---------------------------------------------------------------- baseline

StepResult baseline_step(const ControllerConfig& config, BaselineState& state, const Vec3& user_hand, const Vec3& ee) {
    const double dt = config.dt();
    Vec3 predicted = user_hand;
    if (!state.filter) {
        state.filter = kalman_init(user_hand, config.kalman);
    } else {
        auto k = kalman_step(*state.filter, user_hand, config.kalman, dt);
        state.filter = k.state;
        predicted = k.prediction;
    }
    StepResult r;
    r.next_ee = ee;
    if (!state.active)
        for (const auto& b : config.activation_regions) state.active = state.active || b.contains(user_hand);
    if (!state.active) {
        r.status = ControllerStatus::Idle;
        return r;
    }
    r.handover_detected = true;
    if (state.reached || (ee - user_hand).norm() <= config.stop_distance) {
        state.reached = true;
        r.status = ControllerStatus::Reached;
        return r;
    }
    const Vec3 to_target = predicted - ee;
    const double dist = to_target.norm();
    const double want = dist - (config.stop_distance - config.approach_margin);
    if (want > 0.0) r.next_ee = ee + to_target / dist * std::min(config.speed_cap * dt, want);
    r.status = ControllerStatus::Active;
    if ((r.next_ee - user_hand).norm() <= config.stop_distance) state.reached = true;
    return r;
}

// ---------------------------------------------------------------- 3HANDS

HandsModels bind_models(const TimingModel& timing, const SvaeModel& svae) {
    HandsModels m;
    m.likelihood = [&timing](const Eigen::MatrixXd& h) { return predict_likelihood(timing, h); };
    m.generate = [&svae](const Eigen::MatrixXd& h, const Eigen::MatrixXd& r, HandoverState s) {
        return generate_next(svae, h, r, s);
    };
    return m;
}

namespace {

void push_bounded(std::deque<Eigen::RowVectorXd>& q, Eigen::RowVectorXd row, std::size_t cap) {
    q.push_back(std::move(row));
    while (q.size() > cap) q.pop_front();
}

Eigen::MatrixXd stack(const std::deque<Eigen::RowVectorXd>& q) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(q.size()), q.front().size());
    for (std::size_t i = 0; i < q.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = q[i];
    return m;
}

}  // namespace

void hands_observe(const ControllerConfig& config, HandsState& state, const Eigen::RowVectorXd& primary_features,
                   const Vec3& ee, const Mat3& ee_rotation) {
    const auto cap = static_cast<std::size_t>(config.T + 1);
    push_bounded(state.primary, primary_features, cap);
    push_bounded(state.robot, robot_frame_features(HipFrame{}, ee, ee_rotation), cap);
}

StepResult hands_step(const ControllerConfig& config, const HandsModels& models, HandsState& state,
                      HandoverState kind, const Eigen::RowVectorXd& primary_features, const Vec3& user_hand,
                      const Vec3& ee, const Mat3& ee_rotation) {
    hands_observe(config, state, primary_features, ee, ee_rotation);
    if (state.primary.size() < static_cast<std::size_t>(config.T + 1))
        throw TooShortError("hands_step: " + std::to_string(state.primary.size()) + " frames buffered, need " +
                            std::to_string(config.T + 1));
    if (!models.likelihood || !models.generate) throw ConfigError("hands_step: models are not bound");
    StepResult r;
    r.next_ee = ee;
    const Eigen::MatrixXd h = stack(state.primary);
    if (!state.triggered) {
        r.likelihood = models.likelihood(h);
        state.triggered = classify(r.likelihood, config.threshold);
    }
    r.handover_detected = state.triggered;
    if (!state.triggered) {
        r.status = ControllerStatus::Idle;
        return r;
    }
    if (state.reached || (ee - user_hand).norm() <= config.stop_distance) {
        state.reached = true;
        r.status = ControllerStatus::Reached;
        return r;
    }
    r.next_ee = models.generate(h, stack(state.robot), kind);
    if (!r.next_ee.allFinite()) throw NumericError("hands_step: generated a non-finite position");
    r.status = ControllerStatus::Active;
    if ((r.next_ee - user_hand).norm() <= config.stop_distance) state.reached = true;
    return r;
}

// ---------------------------------------------------------------- simulation

std::vector<AgentFrame> agent_frames(const AgentScript& script, int ticks) {
    if (ticks < 0) throw ValidationError("agent_frames: negative tick count");
    if (script.kind == HandoverState::Idle) throw ConfigError("agent script: kind must be a handover");
    ClipSpec spec;
    spec.activity = script.activity;
    spec.pair_id = script.pair_id;
    spec.kind = script.kind;
    spec.lead_time = script.cue_time;
    spec.transfer_point = script.transfer_point;
    spec.randomize_placement = false;
    spec.release = false;
    const auto sc = synth_clip(script.synth, spec, derive_seed(script.seed, "agent"));
    const auto& clip = sc.clip;
    const auto& skel = *clip.skeleton;
    const std::size_t hand = skel.index_of("RightHand");
    std::vector<AgentFrame> out;
    out.reserve(static_cast<std::size_t>(ticks));
    for (int t = 0; t < ticks; ++t) {
        const auto& pose = clip.frames[std::min(static_cast<std::size_t>(t), clip.frames.size() - 1)].primary;
        const auto hip = hip_frame(pose.root_position, pose.root_rotation);
        if (!hip) throw DegenerateError("agent: vertical facing axis");
        AgentFrame f;
        f.primary_features = primary_frame_features(skel, pose, *hip);
        f.hand = hip->to_local(forward_kinematics(skel, pose)[hand]);
        out.push_back(std::move(f));
    }
    return out;
}

double mean_jerk(const std::vector<Vec3>& track) {
    if (track.size() < 4) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k + 3 < track.size(); ++k)
        s += (track[k + 3] - 3.0 * track[k + 2] + 3.0 * track[k + 1] - track[k]).norm();
    return s / static_cast<double>(track.size() - 3);
}

EpisodeLog run_episode(ControllerKind kind, const ControllerConfig& config, const AgentScript& script, int ticks,
                       const HandsModels* models) {
    config.validate();
    if (ticks < 0) throw ValidationError("run_episode: negative tick count");
    if (kind == ControllerKind::Hands && !models) throw ConfigError("run_episode: the hands controller needs models");
    EpisodeLog log;
    if (ticks == 0) return log;
    const auto frames = agent_frames(script, ticks);
    const Mat3 ee_rot = robot_rest_rotation();
    Vec3 ee = config.robot_rest;
    BaselineState baseline;
    HandsState hands;
    std::vector<Vec3> track{ee};
    for (int t = 0; t < ticks; ++t) {
        const auto& f = frames[static_cast<std::size_t>(t)];
        StepResult r;
        if (kind == ControllerKind::Baseline) {
            r = baseline_step(config, baseline, f.hand, ee);
        } else if (t < config.T) {
            hands_observe(config, hands, f.primary_features, ee, ee_rot);
            r.next_ee = ee;
            r.status = ControllerStatus::Buffering;
        } else {
            r = hands_step(config, *models, hands, script.kind, f.primary_features, f.hand, ee, ee_rot);
        }
        ee = r.next_ee;
        track.push_back(ee);
        log.outcome.path_length += (track.back() - track[track.size() - 2]).norm();
        TickLog tl;
        tl.tick = t;
        tl.user_hand = f.hand;
        tl.ee = ee;
        tl.status = r.status;
        tl.handover_detected = r.handover_detected;
        tl.likelihood = r.likelihood;
        log.ticks.push_back(tl);
        const double d = (ee - f.hand).norm();
        log.outcome.final_distance = d;
        if (d <= config.stop_distance) {
            log.outcome.completed = true;
            log.outcome.completion_tick = t;
            break;
        }
    }
    log.outcome.mean_jerk = mean_jerk(track);
    return log;
}

std::string episode_jsonl(const EpisodeLog& log) {
    std::ostringstream os;
    for (const auto& t : log.ticks) {
        nlohmann::json j{{"tick", t.tick},
                         {"user_hand", {t.user_hand.x(), t.user_hand.y(), t.user_hand.z()}},
                         {"ee", {t.ee.x(), t.ee.y(), t.ee.z()}},
                         {"controller_state", std::string(to_string(t.status))},
                         {"handover_detected", t.handover_detected},
                         {"likelihood", t.likelihood}};
        os << j.dump() << '\n';
    }
    return os.str();
}

std::string episode_summary_csv(const std::vector<std::pair<std::string, EpisodeLog>>& episodes) {
    std::ostringstream os;
    os << "episode,completed,completion_tick,final_distance_m,path_length_m,mean_jerk_m\n";
    for (const auto& [name, e] : episodes)
        os << name << ',' << (e.outcome.completed ? 1 : 0) << ',' << e.outcome.completion_tick << ','
           << format_double(e.outcome.final_distance) << ',' << format_double(e.outcome.path_length) << ','
           << format_double(e.outcome.mean_jerk) << '\n';
    return os.str();
}

}  // namespace handover
