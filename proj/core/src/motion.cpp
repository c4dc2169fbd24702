#include "handover/motion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "handover/error.hpp"

namespace handover {

std::string_view to_string(HandoverState s) {
    switch (s) {
        case HandoverState::HandingOver: return "handing_over";
        case HandoverState::TakingBack: return "taking_back";
        case HandoverState::Idle: return "idle";
    }
    return "idle";
}

std::string_view to_string(Possession p) { return p == Possession::Primary ? "primary" : "robot"; }

HandoverState parse_handover_state(std::string_view text) {
    if (text == "handing_over") return HandoverState::HandingOver;
    if (text == "taking_back") return HandoverState::TakingBack;
    if (text == "idle") return HandoverState::Idle;
    throw SchemaError("unknown handover state '" + std::string(text) +
                      "' (permitted: handing_over, taking_back, idle)");
}

Possession parse_possession(std::string_view text) {
    if (text == "primary") return Possession::Primary;
    if (text == "robot") return Possession::Robot;
    throw SchemaError("unknown possession '" + std::string(text) + "' (permitted: primary, robot)");
}

std::array<double, 3> one_hot(HandoverState s) {
    std::array<double, 3> v{0.0, 0.0, 0.0};
    v[static_cast<std::size_t>(s)] = 1.0;
    return v;
}

namespace {

struct ActivityInfo {
    Activity id;
    std::string_view name;
    std::string_view slug;
    std::optional<ActivityParameters> params;
};

using H = ActivityHeight;
using D = ActivityDistance;
using R = MotionRange;

constexpr std::array<ActivityInfo, kNumActivities> kActivities{{
    {Activity::MountMic, "Mount a mic", "mount_mic", ActivityParameters{H::Torso, D::OnBody, R::Small}},
    {Activity::ApplySunscreen, "Apply sunscreen to face", "apply_sunscreen", ActivityParameters{H::Head, D::OnBody, R::Small}},
    {Activity::ApplyBodyLotion, "Apply body lotion to chest", "apply_body_lotion", ActivityParameters{H::Torso, D::OnBody, R::Medium}},
    {Activity::ShampooHair, "Shampoo hair", "shampoo_hair", ActivityParameters{H::Head, D::OnBody, R::Medium}},
    {Activity::WashTorso, "Wash torso with washcloth", "wash_torso", ActivityParameters{H::Torso, D::OnBody, R::Large}},
    {Activity::BlowDryHair, "Blow dry hair", "blow_dry_hair", ActivityParameters{H::Head, D::OnBody, R::Large}},
    {Activity::StraightenPictureLow, "Straighten a picture (low)", "straighten_picture_low", ActivityParameters{H::Torso, D::MidAir, R::Small}},
    {Activity::StraightenPictureHigh, "Straighten a picture (high)", "straighten_picture_high", ActivityParameters{H::Head, D::MidAir, R::Small}},
    {Activity::HammerNail, "Hammer a nail", "hammer_nail", ActivityParameters{H::Torso, D::MidAir, R::Medium}},
    {Activity::CleanWindow, "Clean a window", "clean_window", ActivityParameters{H::Head, D::MidAir, R::Medium}},
    {Activity::PaintWallLow, "Paint the wall (low)", "paint_wall_low", ActivityParameters{H::Torso, D::MidAir, R::Large}},
    {Activity::PaintWallHigh, "Paint the wall (high)", "paint_wall_high", ActivityParameters{H::Head, D::MidAir, R::Large}},
    {Activity::NeutralPose, "Neutral pose", "neutral_pose", std::nullopt},
}};

const ActivityInfo& info(Activity a) { return kActivities[static_cast<std::size_t>(a)]; }

}  // namespace

std::string_view activity_name(Activity a) { return info(a).name; }
std::string_view activity_slug(Activity a) { return info(a).slug; }
std::optional<ActivityParameters> activity_parameters(Activity a) { return info(a).params; }

Activity parse_activity(std::string_view text) {
    for (const auto& a : kActivities)
        if (a.slug == text || a.name == text) return a.id;
    throw LookupError("unknown activity '" + std::string(text) + "'");
}

const std::array<Activity, kNumActivities>& all_activities() {
    static const std::array<Activity, kNumActivities> all = [] {
        std::array<Activity, kNumActivities> a{};
        for (int i = 0; i < kNumActivities; ++i) a[static_cast<std::size_t>(i)] = static_cast<Activity>(i);
        return a;
    }();
    return all;
}

void check_clip(const MotionClip& clip) {
    if (!clip.skeleton) throw StructuralError("clip '" + clip.name + "' has no skeleton");
    if (!(clip.fps > 0.0)) throw StructuralError("clip '" + clip.name + "' has non-positive fps");
    if (clip.annotations.size() != clip.frames.size())
        throw StructuralError("clip '" + clip.name + "': annotations length " +
                              std::to_string(clip.annotations.size()) + " != frames " +
                              std::to_string(clip.frames.size()));
    for (const auto& f : clip.frames)
        if (f.primary.joint_angles.size() != clip.skeleton->size())
            throw StructuralError("clip '" + clip.name + "': frame joint count does not match skeleton");
}

}  // namespace handover
