#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "handover/dataio.hpp"
#include "handover/rng.hpp"

namespace handover {

// Synthetic stand-in for the captured corpus. One clip holds one handover:
// an idle lead-in of activity motion, the user's reach cue, the robot
// end-effector's minimum-jerk approach to the region of transfer and its
// return to rest, and an idle tail.
struct SynthConfig {
    // Clips per activity, indexed by Activity.
    std::array<int, kNumActivities> activity_counts{};
    int pair_count = 12;
    double fps = 25.0;

    double duration_mean = 2.244;  // s
    double duration_std = 0.854;
    double duration_min = 0.8;
    double duration_max = 6.0;

    double lead_min = 2.0;  // idle activity before the cue, s
    double lead_max = 3.5;
    double tail_min = 1.3;  // idle after the robot is back at rest, s
    double tail_max = 2.0;
    double cue_lag_min = 0.2;  // user cue -> robot starts moving, s
    double cue_lag_max = 0.5;
    double reach_min = 0.5;  // user reach duration, s
    double reach_max = 0.8;
    double approach_fraction = 0.55;  // share of the segment spent approaching

    double palm_separation_min = 0.05;  // m, object between the palms
    double palm_separation_max = 0.08;
    Vec3 robot_rest{-0.25, 0.0, 0.0};  // hip frame: 0.25 m to the right, hip level

    double angle_noise = 0.004;  // rad, per joint angle and frame
    double ee_noise = 0.001;     // m

    // Clips distributed round-robin over the 13 activities.
    static SynthConfig with_total(int total_clips);
    int total_clips() const;
    void validate() const;  // throws ConfigError
};

// Region of the handover location in the user's hip frame (+z forward,
// +y up, -x right).
struct HandoverRegion {
    double front_max = 0.5;
    double right_max = 0.45;
    double up_max = 0.8;

    bool contains(const Vec3& p, double tolerance = 1e-9) const;
};

struct ClipSpec {
    Activity activity = Activity::NeutralPose;
    int pair_id = 0;
    HandoverState kind = HandoverState::HandingOver;
    std::optional<double> lead_time;     // s; sampled when empty
    std::optional<double> duration;      // s; sampled when empty
    std::optional<Vec3> transfer_point;  // hip frame; sampled when empty
    bool randomize_placement = true;     // random world position/heading
    bool release = true;                 // false: the hand stays presented after the reach
};

// Ground truth kept alongside a generated clip.
struct SynthTruth {
    std::size_t cue_frame = 0;
    std::size_t segment_start = 0;
    std::size_t transfer_frame = 0;
    std::size_t segment_end = 0;
    Vec3 transfer_point = Vec3::Zero();  // hip frame
    Vec3 primary_palm = Vec3::Zero();    // hip frame, at transfer
    Vec3 robot_palm = Vec3::Zero();      // hip frame, at transfer
    double duration = 0.0;
};

struct SynthClip {
    MotionClip clip;
    SynthTruth truth;
};

// End-effector orientation at rest, hip frame.
Mat3 robot_rest_rotation();

SynthClip synth_clip(const SynthConfig& config, const ClipSpec& spec, std::uint64_t seed,
                     std::shared_ptr<const Skeleton> skeleton = nullptr);

// Deterministic in (config, seed). Clip i draws from derive_seed(seed,
// "synth-clip", i), so clips can be generated independently.
Corpus synth_corpus(const SynthConfig& config, std::uint64_t seed);

// Segment duration draw: Normal(mean, std) clipped to [min, max].
double sample_handover_duration(const SynthConfig& config, Rng& rng);

}  // namespace handover
