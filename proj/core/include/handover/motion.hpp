#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "handover/kinematics.hpp"

namespace handover {

enum class HandoverState { HandingOver = 0, TakingBack = 1, Idle = 2 };
inline constexpr int kNumHandoverStates = 3;

enum class Possession { Primary = 0, Robot = 1 };

std::string_view to_string(HandoverState s);
std::string_view to_string(Possession p);
HandoverState parse_handover_state(std::string_view text);  // throws SchemaError
Possession parse_possession(std::string_view text);         // throws SchemaError
std::array<double, 3> one_hot(HandoverState s);

enum class Activity {
    MountMic = 0,
    ApplySunscreen,
    ApplyBodyLotion,
    ShampooHair,
    WashTorso,
    BlowDryHair,
    StraightenPictureLow,
    StraightenPictureHigh,
    HammerNail,
    CleanWindow,
    PaintWallLow,
    PaintWallHigh,
    NeutralPose,
};
inline constexpr int kNumActivities = 13;

enum class ActivityHeight { Torso, Head };
enum class ActivityDistance { OnBody, MidAir };
enum class MotionRange { Small, Medium, Large };

// Position of an activity in the height x distance x motion-range grid.
// The neutral pose has no parameters.
struct ActivityParameters {
    ActivityHeight height;
    ActivityDistance distance;
    MotionRange range;
};

std::string_view activity_name(Activity a);    // display name
std::string_view activity_slug(Activity a);    // snake_case identifier
Activity parse_activity(std::string_view slug_or_name);  // throws LookupError
std::optional<ActivityParameters> activity_parameters(Activity a);
const std::array<Activity, kNumActivities>& all_activities();

struct Annotation {
    HandoverState state = HandoverState::Idle;
    Possession possession = Possession::Robot;
    double time_in_segment = 0.0;  // seconds since segment start; 0 outside
};

struct Frame {
    Pose primary;
    Vec3 robot_ee_position = Vec3::Zero();
    Mat3 robot_ee_rotation = Mat3::Identity();
};

struct MotionClip {
    std::shared_ptr<const Skeleton> skeleton;
    double fps = 25.0;
    std::vector<Frame> frames;
    std::vector<Annotation> annotations;
    Activity activity = Activity::NeutralPose;
    int pair_id = 0;
    std::string name;

    std::size_t size() const noexcept { return frames.size(); }
};

// Throws StructuralError when a clip breaks the MotionClip invariants.
void check_clip(const MotionClip& clip);

}  // namespace handover
