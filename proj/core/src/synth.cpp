#include "handover/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "handover/error.hpp"

namespace handover {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHipHeight = 0.95;
constexpr double kUpperArm = 0.28;
constexpr double kForearmAndHand = 0.33;  // wrist offset + hand offset, wrist held straight
constexpr double kMaxReach = 0.58;

// Per-pair motion style: every participant pair moves a little differently,
// which is what a participant-level split has to generalize across.
struct PairStyle {
    double amplitude_scale;
    double frequency_scale;
    double lag_bias;
    Vec3 target_bias;
    double phase;
};

PairStyle pair_style(int pair_id) {
    Rng rng(derive_seed(0x3a4d5eedULL, "pair-style", static_cast<std::uint64_t>(pair_id)));
    PairStyle s;
    s.amplitude_scale = uniform(rng, 0.8, 1.2);
    s.frequency_scale = uniform(rng, 0.8, 1.25);
    s.lag_bias = uniform(rng, -0.05, 0.05);
    s.target_bias = Vec3(uniform(rng, -0.04, 0.04), uniform(rng, -0.05, 0.05), uniform(rng, -0.04, 0.04));
    s.phase = uniform(rng, 0.0, 2.0 * kPi);
    return s;
}

struct ActivityMotion {
    Vec3 right_center;
    Vec3 left_center;
    double amplitude;
    double frequency;  // Hz
    Vec3 axis1;
    Vec3 axis2;
    double left_amplitude;
};

ActivityMotion activity_motion(Activity a) {
    ActivityMotion m;
    const auto params = activity_parameters(a);
    if (!params) {
        m.right_center = Vec3(-0.19, -0.17, 0.05);
        m.left_center = Vec3(0.19, -0.17, 0.05);
        m.amplitude = 0.01;
        m.frequency = 0.3;
        m.axis1 = Vec3::UnitZ();
        m.axis2 = Vec3::UnitY();
        m.left_amplitude = 0.01;
        return m;
    }
    const bool head = params->height == ActivityHeight::Head;
    const bool on_body = params->distance == ActivityDistance::OnBody;
    const double y = head ? (on_body ? 0.62 : 0.68) : (on_body ? 0.30 : 0.34);
    const double z = on_body ? (head ? 0.12 : 0.15) : 0.42;
    m.right_center = Vec3(on_body ? -0.09 : -0.10, y, z);
    m.left_center = on_body ? Vec3(0.12, y - 0.04, z - 0.02) : Vec3(0.14, y - 0.12, z - 0.12);
    switch (params->range) {
        case MotionRange::Small:
            m.amplitude = 0.025;
            m.frequency = 1.0;
            break;
        case MotionRange::Medium:
            m.amplitude = 0.07;
            m.frequency = 1.8;
            break;
        case MotionRange::Large:
            m.amplitude = 0.15;
            m.frequency = 0.6;
            break;
    }
    const double theta = 0.5 * static_cast<double>(static_cast<int>(a));
    m.axis1 = Vec3(std::cos(theta), std::sin(theta), 0.0);
    m.axis2 = on_body ? Vec3(0.0, 0.0, 1.0) : Vec3(-std::sin(theta), std::cos(theta), 0.0);
    m.left_amplitude = 0.3 * m.amplitude;
    return m;
}

Vec3 activity_offset(const ActivityMotion& m, const PairStyle& style, double t, double phase) {
    const double w = 2.0 * kPi * m.frequency * style.frequency_scale;
    const double a = m.amplitude * style.amplitude_scale;
    return a * (std::sin(w * t + phase) * m.axis1 + 0.5 * std::sin(2.0 * w * t + 0.7 * phase) * m.axis2);
}

// Two-link arm solve: shoulder (3 dof) aims the chain, elbow flexes about x.
void solve_arm(const Skeleton& skel, Pose& pose, std::size_t shoulder, const Vec3& target_world) {
    const std::size_t elbow = shoulder + 1;
    const auto fk = forward_kinematics_full(skel, pose);
    const std::size_t parent = static_cast<std::size_t>(skel.joint(shoulder).parent);
    const Mat3& parent_rot = fk.rotations[parent];
    const Vec3 s = fk.positions[shoulder];
    Vec3 d = parent_rot.transpose() * (target_world - s);
    double dist = d.norm();
    const double dmin = 0.12;
    const double dmax = kUpperArm + kForearmAndHand - 1e-3;
    if (dist < 1e-9) d = Vec3(0, -1, 0), dist = 1.0;
    const double reach = std::clamp(dist, dmin, dmax);
    const double cos_inner = (kUpperArm * kUpperArm + kForearmAndHand * kForearmAndHand - reach * reach) /
                             (2.0 * kUpperArm * kForearmAndHand);
    const double flex = kPi - std::acos(std::clamp(cos_inner, -1.0, 1.0));
    const Mat3 elbow_rot = axis_rotation(Axis::X, -flex);
    const Vec3 chain = Vec3(0, -kUpperArm, 0) + elbow_rot * Vec3(0, -kForearmAndHand, 0);
    const Mat3 aim = Eigen::Quaterniond::FromTwoVectors(chain, d).toRotationMatrix();
    pose.joint_angles[shoulder] = matrix_to_joint_angles(skel.joint(shoulder).dof, aim);
    pose.joint_angles[elbow] = Vec3(-flex, 0.0, 0.0);
}

void clamp_to_limits(const Skeleton& skel, Pose& pose) {
    for (std::size_t j = 1; j < skel.size(); ++j) {
        const auto& dof = skel.joint(j).dof;
        for (std::size_t a = 0; a < 3; ++a) {
            auto& v = pose.joint_angles[j][static_cast<Eigen::Index>(a)];
            v = a < dof.size() ? std::clamp(v, dof[a].min_angle, dof[a].max_angle) : 0.0;
        }
    }
}

Vec3 sample_transfer_point(const HandoverRegion& region, const ActivityMotion& motion, Activity activity,
                           const PairStyle& style, const Vec3& shoulder_local, const Vec3& robot_rest,
                           double separation, Rng& rng) {
    const auto params = activity_parameters(activity);
    const bool head = params && params->height == ActivityHeight::Head;
    const double y_lo = head ? 0.30 : 0.05;
    const double y_hi = head ? region.up_max : 0.50;
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Vec3 p(-uniform(rng, 0.0, region.right_max), uniform(rng, y_lo, y_hi), uniform(rng, 0.0, region.front_max));
        // Activity pulls the handover towards where the hands already are.
        p = 0.6 * p + 0.4 * Vec3(std::min(motion.right_center.x(), 0.0), motion.right_center.y(),
                                 std::min(motion.right_center.z(), region.front_max));
        p += style.target_bias;
        const double ex = p.x() / region.right_max;
        const double ez = p.z() / region.front_max;
        if (!region.contains(p) || ex * ex + ez * ez > 1.0) continue;
        const Vec3 u = (robot_rest - p).normalized();
        const Vec3 palm = p - 0.5 * separation * u;
        if ((palm - shoulder_local).norm() > kMaxReach) continue;
        return p;
    }
    throw ConfigError("could not sample a reachable handover location");
}

}  // namespace

bool HandoverRegion::contains(const Vec3& p, double tol) const {
    return p.z() >= -tol && p.z() <= front_max + tol && p.x() <= tol && p.x() >= -right_max - tol &&
           p.y() >= -tol && p.y() <= up_max + tol;
}

SynthConfig SynthConfig::with_total(int total_clips) {
    SynthConfig c;
    for (int i = 0; i < total_clips; ++i) c.activity_counts[static_cast<std::size_t>(i % kNumActivities)] += 1;
    return c;
}

int SynthConfig::total_clips() const {
    int n = 0;
    for (int c : activity_counts) n += c;
    return n;
}

void SynthConfig::validate() const {
    for (int c : activity_counts)
        if (c < 0) throw ConfigError("synth: negative activity count");
    if (pair_count <= 0) throw ConfigError("synth: pair_count must be positive");
    if (!(fps > 0)) throw ConfigError("synth: fps must be positive");
    if (!(duration_std >= 0) || !(duration_min > 0) || duration_min > duration_max)
        throw ConfigError("synth: invalid duration distribution");
    if (lead_min <= 0 || lead_min > lead_max || tail_min <= 0 || tail_min > tail_max)
        throw ConfigError("synth: invalid lead/tail range");
    if (cue_lag_min < 0 || cue_lag_min > cue_lag_max || reach_min <= 0 || reach_min > reach_max)
        throw ConfigError("synth: invalid cue timing");
    if (!(approach_fraction > 0 && approach_fraction < 1)) throw ConfigError("synth: approach_fraction in (0,1)");
    if (palm_separation_min <= 0 || palm_separation_min > palm_separation_max)
        throw ConfigError("synth: invalid palm separation");
    if (angle_noise < 0 || ee_noise < 0) throw ConfigError("synth: negative noise");
}

Mat3 robot_rest_rotation() { return axis_rotation(Axis::X, 0.2); }

double sample_handover_duration(const SynthConfig& config, Rng& rng) {
    const double d = config.duration_mean + config.duration_std * standard_normal(rng);
    return std::clamp(d, config.duration_min, config.duration_max);
}

SynthClip synth_clip(const SynthConfig& config, const ClipSpec& spec, std::uint64_t seed,
                     std::shared_ptr<const Skeleton> skeleton) {
    config.validate();
    if (spec.kind == HandoverState::Idle) throw ConfigError("synth_clip: handover kind cannot be idle");
    if (!skeleton) skeleton = std::make_shared<const Skeleton>(Skeleton::synthetic_body());
    const Skeleton& skel = *skeleton;
    const std::size_t r_shoulder = skel.index_of("RightShoulder");
    const std::size_t l_shoulder = skel.index_of("LeftShoulder");
    const std::size_t r_hand = skel.index_of("RightHand");
    const std::size_t back = skel.index_of("Back");
    const std::size_t upper_back = skel.index_of("UpperBack");
    const std::size_t neck = skel.index_of("Neck");
    const std::size_t head = skel.index_of("Head");
    const std::size_t r_wrist = skel.index_of("RightWrist");
    const std::size_t l_wrist = skel.index_of("LeftWrist");

    Rng rng(seed);
    const PairStyle style = pair_style(spec.pair_id);
    const ActivityMotion motion = activity_motion(spec.activity);
    const HandoverRegion region;
    const double fps = config.fps;
    auto frames_of = [fps](double seconds) { return static_cast<std::size_t>(std::lround(seconds * fps)); };

    // Timeline.
    const double lead = spec.lead_time ? *spec.lead_time : uniform(rng, config.lead_min, config.lead_max);
    const double lag = std::max(0.04, uniform(rng, config.cue_lag_min, config.cue_lag_max) + style.lag_bias);
    const double reach_time = uniform(rng, config.reach_min, config.reach_max);
    const double duration = spec.duration ? *spec.duration : sample_handover_duration(config, rng);
    const double tail = uniform(rng, config.tail_min, config.tail_max);
    const double hold_after = uniform(rng, 0.1, 0.3);
    const double release_time = uniform(rng, 0.5, 0.7);
    const double separation = uniform(rng, config.palm_separation_min, config.palm_separation_max);
    const double phase = style.phase + uniform(rng, 0.0, 2.0 * kPi);

    SynthTruth truth;
    truth.cue_frame = frames_of(lead);
    truth.segment_start = truth.cue_frame + std::max<std::size_t>(1, frames_of(lag));
    const std::size_t seg_frames = std::max<std::size_t>(3, frames_of(duration));
    truth.duration = static_cast<double>(seg_frames) / fps;
    truth.segment_end = truth.segment_start + seg_frames - 1;
    const auto approach_frames = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(config.approach_fraction * static_cast<double>(seg_frames - 1))), 1,
        seg_frames - 2);
    truth.transfer_frame = truth.segment_start + approach_frames;
    const std::size_t total = truth.segment_end + 1 + frames_of(tail);

    // Transfer geometry in the hip frame.
    const Vec3 shoulder_local = forward_kinematics(skel, Pose::rest(skel))[r_shoulder];
    truth.transfer_point = spec.transfer_point
                               ? *spec.transfer_point
                               : sample_transfer_point(region, motion, spec.activity, style, shoulder_local,
                                                       config.robot_rest, separation, rng);
    const Vec3 u = (config.robot_rest - truth.transfer_point).normalized();
    const Vec3 user_palm_target = truth.transfer_point - 0.5 * separation * u;
    const Vec3 robot_palm_target = truth.transfer_point + 0.5 * separation * u;

    // World placement.
    Vec3 origin(0.0, kHipHeight, 0.0);
    double heading = 0.0;
    if (spec.randomize_placement) {
        origin = Vec3(uniform(rng, -2.0, 2.0), kHipHeight, uniform(rng, -2.0, 2.0));
        heading = uniform(rng, -kPi, kPi);
    }
    const double sway_phase = uniform(rng, 0.0, 2.0 * kPi);
    // The generator only commands position, so the wrist keeps its rest
    // orientation throughout.
    const Mat3 ee_rot_local = robot_rest_rotation();

    SynthClip out;
    MotionClip& clip = out.clip;
    clip.skeleton = skeleton;
    clip.fps = fps;
    clip.activity = spec.activity;
    clip.pair_id = spec.pair_id;
    clip.frames.resize(total);
    clip.annotations.resize(total);

    const double cue_t = static_cast<double>(truth.cue_frame) / fps;
    const double transfer_t = static_cast<double>(truth.transfer_frame) / fps;
    for (std::size_t f = 0; f < total; ++f) {
        const double t = static_cast<double>(f) / fps;

        // Reach blend: 0 during activity, 1 while presenting the hand.
        double w = 0.0;
        if (t >= cue_t) w = minimum_jerk_profile((t - cue_t) / reach_time);
        const double release_start = transfer_t + hold_after;
        if (spec.release && t >= release_start) w = 1.0 - minimum_jerk_profile((t - release_start) / release_time);

        Pose pose = Pose::rest(skel);
        const double sway = 0.01 * std::sin(2.0 * kPi * 0.25 * t + sway_phase);
        const double yaw = heading + 0.03 * std::sin(2.0 * kPi * 0.17 * t + sway_phase);
        pose.root_position = origin + Vec3(sway, 0.004 * std::sin(2.0 * kPi * 0.5 * t), 0.5 * sway);
        pose.root_rotation = axis_rotation(Axis::Y, yaw);
        const auto hip = *hip_frame(pose.root_position, pose.root_rotation);

        const Vec3 right_target_local =
            (1.0 - w) * (motion.right_center + activity_offset(motion, style, t, phase)) + w * user_palm_target;
        const Vec3 left_target_local =
            motion.left_center + (motion.left_amplitude / std::max(motion.amplitude, 1e-9)) *
                                     activity_offset(motion, style, t, phase + kPi);

        // Torso leans and twists towards the reach; head follows the hand.
        const double act = std::sin(2.0 * kPi * motion.frequency * style.frequency_scale * t + phase);
        pose.joint_angles[back] = Vec3(0.02 * act, 0.06 * w, -0.10 * w);
        pose.joint_angles[upper_back] = Vec3(0.015 * act, 0.03 * w, -0.06 * w);
        const double look_yaw = std::clamp(std::atan2(right_target_local.x(), std::max(0.05, right_target_local.z())), -0.6, 0.6);
        const double look_pitch = std::clamp(-0.5 * (right_target_local.y() - 0.6), -0.5, 0.5);
        pose.joint_angles[neck] = Vec3(0.0, 0.4 * look_pitch, 0.4 * look_yaw);
        pose.joint_angles[head] = Vec3(0.0, 0.6 * look_pitch, 0.6 * look_yaw);
        pose.joint_angles[r_wrist] = Vec3(0.1 * act, 0.0, 0.0);
        pose.joint_angles[l_wrist] = Vec3(-0.1 * act, 0.0, 0.0);

        for (std::size_t j = 1; j < skel.size(); ++j)
            if (j != r_shoulder && j != r_shoulder + 1 && j != l_shoulder && j != l_shoulder + 1)
                for (std::size_t a = 0; a < skel.joint(j).dof.size(); ++a)
                    pose.joint_angles[j][static_cast<Eigen::Index>(a)] += config.angle_noise * standard_normal(rng);
        clamp_to_limits(skel, pose);
        solve_arm(skel, pose, r_shoulder, hip.to_world(right_target_local));
        solve_arm(skel, pose, l_shoulder, hip.to_world(left_target_local));
        for (std::size_t j : {r_shoulder, r_shoulder + 1, l_shoulder, l_shoulder + 1})
            for (std::size_t a = 0; a < skel.joint(j).dof.size(); ++a)
                pose.joint_angles[j][static_cast<Eigen::Index>(a)] += config.angle_noise * standard_normal(rng);
        clamp_to_limits(skel, pose);

        // Robot end-effector, hip-mounted: rest -> transfer -> rest.
        Vec3 ee_local = config.robot_rest;
        double progress = 0.0;
        if (f >= truth.segment_start && f <= truth.transfer_frame) {
            progress = minimum_jerk_profile(static_cast<double>(f - truth.segment_start) /
                                            static_cast<double>(truth.transfer_frame - truth.segment_start));
        } else if (f > truth.transfer_frame && f <= truth.segment_end) {
            progress = 1.0 - minimum_jerk_profile(static_cast<double>(f - truth.transfer_frame) /
                                                  static_cast<double>(truth.segment_end - truth.transfer_frame));
        }
        ee_local = config.robot_rest + progress * (robot_palm_target - config.robot_rest);

        Frame& fr = clip.frames[f];
        fr.primary = std::move(pose);
        fr.robot_ee_position = hip.to_world(ee_local) + config.ee_noise * Vec3(standard_normal(rng), standard_normal(rng), standard_normal(rng));
        fr.robot_ee_rotation = hip.yaw.transpose() * ee_rot_local;

        Annotation& an = clip.annotations[f];
        const bool in_segment = f >= truth.segment_start && f <= truth.segment_end;
        an.state = in_segment ? spec.kind : HandoverState::Idle;
        an.time_in_segment = in_segment ? static_cast<double>(f - truth.segment_start) / fps : 0.0;
        const bool after_transfer = f >= truth.transfer_frame;
        const Possession giver = spec.kind == HandoverState::HandingOver ? Possession::Robot : Possession::Primary;
        const Possession receiver = giver == Possession::Robot ? Possession::Primary : Possession::Robot;
        an.possession = after_transfer ? receiver : giver;

        if (f == truth.transfer_frame) {
            const auto fk = forward_kinematics(skel, clip.frames[f].primary);
            truth.primary_palm = hip.to_local(fk[r_hand]);
            truth.robot_palm = hip.to_local(clip.frames[f].robot_ee_position);
        }
    }
    out.truth = truth;
    return out;
}

Corpus synth_corpus(const SynthConfig& config, std::uint64_t seed) {
    config.validate();
    Corpus corpus;
    corpus.skeleton = std::make_shared<const Skeleton>(Skeleton::synthetic_body());
    std::size_t index = 0;
    for (int a = 0; a < kNumActivities; ++a) {
        const int count = config.activity_counts[static_cast<std::size_t>(a)];
        for (int k = 0; k < count; ++k, ++index) {
            const std::uint64_t clip_seed = derive_seed(seed, "synth-clip", index);
            Rng pick(derive_seed(clip_seed, "spec"));
            ClipSpec spec;
            spec.activity = static_cast<Activity>(a);
            spec.pair_id = static_cast<int>(index % static_cast<std::size_t>(config.pair_count));
            spec.kind = (pick() & 1U) ? HandoverState::TakingBack : HandoverState::HandingOver;
            auto sc = synth_clip(config, spec, clip_seed, corpus.skeleton);
            char name[64];
            std::snprintf(name, sizeof(name), "clip_%04zu_%s_p%02d", index,
                          std::string(activity_slug(spec.activity)).c_str(), spec.pair_id);
            sc.clip.name = name;
            corpus.clips.push_back(std::move(sc.clip));
        }
    }
    return corpus;
}

}  // namespace handover
