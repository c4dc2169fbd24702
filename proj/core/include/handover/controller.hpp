#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "handover/svae.hpp"
#include "handover/synth.hpp"
#include "handover/timing.hpp"

namespace handover {

// All controller geometry lives in the user's hip frame.
struct Box {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    bool contains(const Vec3& p) const;
};

// The handover envelope: up to 0.5 m in front, 0.45 m to the right and
// 0.8 m above the hip.
Box default_activation_region();

struct KalmanConfig {
    double process_noise = 1e-2;      // white-acceleration spectral density, m^2/s^3
    double measurement_noise = 1e-4;  // position variance, m^2
    double initial_variance = 1.0;    // initial position/velocity variance
};

struct ControllerConfig {
    double stop_distance = 0.12;   // m
    double approach_margin = 0.003;  // m inside stop_distance the baseline aims for
    double tick_rate = 25.0;       // Hz
    double speed_cap = 0.5;        // m/s, baseline
    std::vector<Box> activation_regions{default_activation_region()};
    KalmanConfig kalman;
    Vec3 robot_rest{-0.25, 0.0, 0.0};
    double threshold = 0.6;  // timing-model decision threshold
    int T = kDefaultWindowT;

    double dt() const { return 1.0 / tick_rate; }
    void validate() const;
};

void to_json(nlohmann::json& j, const ControllerConfig& c);
void from_json(const nlohmann::json& j, ControllerConfig& c);

// Constant-velocity filter over [position, velocity].
struct KalmanState {
    Eigen::Matrix<double, 6, 1> x = Eigen::Matrix<double, 6, 1>::Zero();
    Eigen::Matrix<double, 6, 6> P = Eigen::Matrix<double, 6, 6>::Identity();
};

KalmanState kalman_init(const Vec3& position, const KalmanConfig& config,
                        const Vec3& velocity = Vec3::Zero());
struct KalmanStep {
    KalmanState state;
    Vec3 prediction;  // position expected at the next tick
};
// Predict, then update with the measurement (Joseph form); returns the
// one-step-ahead position.
KalmanStep kalman_step(const KalmanState& state, const Vec3& measurement, const KalmanConfig& config, double dt);

enum class ControllerStatus { Buffering, Idle, Active, Reached };
std::string_view to_string(ControllerStatus s);

struct StepResult {
    Vec3 next_ee = Vec3::Zero();
    ControllerStatus status = ControllerStatus::Idle;
    bool handover_detected = false;
    double likelihood = 0.0;  // timing-model output; 0 for the baseline
};

struct BaselineState {
    std::optional<KalmanState> filter;
    bool active = false;
    bool reached = false;
};

// Inactive until the hand enters an activation region; then moves towards
// the filter's predicted hand position at most speed_cap * dt per tick and
// halts once within stop_distance of the hand.
StepResult baseline_step(const ControllerConfig& config, BaselineState& state, const Vec3& user_hand, const Vec3& ee);

// Model hooks for the data-driven controller, so either trained models or
// fixed stand-ins can drive it.
struct HandsModels {
    std::function<double(const Eigen::MatrixXd& h_past)> likelihood;
    std::function<Vec3(const Eigen::MatrixXd& h_seen, const Eigen::MatrixXd& r_seen, HandoverState state)> generate;
};

HandsModels bind_models(const TimingModel& timing, const SvaeModel& svae);

struct HandsState {
    std::deque<Eigen::RowVectorXd> primary;  // last T+1 primary feature rows
    std::deque<Eigen::RowVectorXd> robot;    // last T+1 robot feature rows
    bool triggered = false;
    bool reached = false;
};

// Buffers one tick of observation without acting.
void hands_observe(const ControllerConfig& config, HandsState& state, const Eigen::RowVectorXd& primary_features,
                   const Vec3& ee, const Mat3& ee_rotation);
// Holds the rest pose until the timing model fires (then latched), after
// which each tick follows the SVAE's next position until the end-effector
// is within stop_distance of the hand. Throws TooShortError with fewer
// than T+1 buffered frames.
StepResult hands_step(const ControllerConfig& config, const HandsModels& models, HandsState& state,
                      HandoverState kind, const Eigen::RowVectorXd& primary_features, const Vec3& user_hand,
                      const Vec3& ee, const Mat3& ee_rotation);

// Scripted user: activity motion, then a reach to the handover location at
// `cue_time`, holding the hand out afterwards.
struct AgentScript {
    Activity activity = Activity::ApplyBodyLotion;
    HandoverState kind = HandoverState::HandingOver;
    int pair_id = 0;
    double cue_time = 1.5;  // s
    std::optional<Vec3> transfer_point;
    std::uint64_t seed = 0;
    SynthConfig synth;
};

struct AgentFrame {
    Eigen::RowVectorXd primary_features;
    Vec3 hand = Vec3::Zero();  // right hand, hip frame
};

std::vector<AgentFrame> agent_frames(const AgentScript& script, int ticks);

enum class ControllerKind { Baseline, Hands };

struct TickLog {
    int tick = 0;
    Vec3 user_hand = Vec3::Zero();
    Vec3 ee = Vec3::Zero();
    ControllerStatus status = ControllerStatus::Idle;
    bool handover_detected = false;
    double likelihood = 0.0;
};

struct EpisodeOutcome {
    bool completed = false;
    int completion_tick = -1;
    double final_distance = 0.0;
    double path_length = 0.0;
    double mean_jerk = 0.0;  // mean |third difference| of the ee track, m
};

struct EpisodeLog {
    std::vector<TickLog> ticks;
    EpisodeOutcome outcome;
};

// Steps agent and controller in lockstep; the log ends at completion.
EpisodeLog run_episode(ControllerKind kind, const ControllerConfig& config, const AgentScript& script, int ticks,
                       const HandsModels* models = nullptr);

double mean_jerk(const std::vector<Vec3>& track);
std::string episode_jsonl(const EpisodeLog& log);
std::string episode_summary_csv(const std::vector<std::pair<std::string, EpisodeLog>>& episodes);

}  // namespace handover
