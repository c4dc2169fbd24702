#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "handover/kinematics.hpp"
#include "handover/motion.hpp"

namespace handover {

inline constexpr int kDefaultWindowT = 25;
inline constexpr int kRobotFeatureWidth = 9;  // position + 6D rotation

// ---------------------------------------------------------------- BVH

struct BvhOptions {
    double unit_scale = 0.01;  // BVH units -> meters (cm files by default)
};

struct BvhResult {
    std::shared_ptr<const Skeleton> skeleton;
    MotionClip clip;
};

// Supports HIERARCHY/ROOT/JOINT/OFFSET/CHANNELS/End Site/MOTION/Frames/
// Frame Time with {X,Y,Z}{position,rotation} channels. Position channels
// are accepted on the root only. Throws ParseError carrying the line.
BvhResult parse_bvh(std::string_view text, const BvhOptions& options = {});
BvhResult load_bvh(const std::filesystem::path& path, const BvhOptions& options = {});

// Writes a skeleton (and optionally motion) back out as BVH. Rotation
// channels follow each joint's dof order; the root gets ZXY rotations.
std::string write_bvh(const Skeleton& skeleton, const std::vector<Pose>& poses, double fps,
                      double unit_scale = 0.01);

// Fills primary.robot_ee_* from a separately captured robot-participant
// clip, using the named end-effector joint (the robot's right hand). The
// rest of the robot body is not retained.
void attach_robot_end_effector(MotionClip& primary, const MotionClip& robot,
                               std::string_view ee_joint = "RightHand");

// ---------------------------------------------------------------- tables

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;  // throws SchemaError
};

CsvTable parse_csv(std::string_view text);
// Shortest representation that parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view text);  // throws SchemaError

// ---------------------------------------------------------------- annotations

// The table lists a contiguous block of frames (or nothing). Frames outside
// the block are Idle. Throws SchemaError on unknown states, gaps, or
// time_in_segment values that disagree with fps.
std::vector<Annotation> load_annotations(const CsvTable& table, std::size_t frame_count, double fps);
std::string write_annotations_csv(const std::vector<Annotation>& annotations);

struct HandoverSegment {
    std::size_t start = 0;  // inclusive
    std::size_t end = 0;    // inclusive
    HandoverState kind = HandoverState::HandingOver;

    std::size_t length() const noexcept { return end - start + 1; }
};

// Maximal runs of non-Idle frames. Throws ConsistencyError when a run mixes
// HandingOver and TakingBack.
std::vector<HandoverSegment> segment_handovers(const MotionClip& clip);
std::vector<HandoverSegment> segment_handovers(const std::vector<Annotation>& annotations);

// ---------------------------------------------------------------- features

// Per-frame model features of a clip, in each frame's hip coordinates.
// primary: N x (J*9) = per joint [px,py,pz, r6_0..r6_5];
// robot:   N x 9     = [ee_px,ee_py,ee_pz, ee_r6_0..ee_r6_5].
struct ClipFeatures {
    Eigen::MatrixXd primary;
    Eigen::MatrixXd robot;
    std::vector<HandoverState> states;
    std::size_t joint_count = 0;
    std::vector<HipFrame> hip_frames;

    Eigen::Index frames() const noexcept { return primary.rows(); }
};

Eigen::RowVectorXd primary_frame_features(const Skeleton& skeleton, const Pose& pose, const HipFrame& hip);
Eigen::RowVectorXd primary_frame_features(const Skeleton& skeleton, const Pose& pose);
Eigen::Matrix<double, 1, kRobotFeatureWidth> robot_frame_features(const HipFrame& hip, const Vec3& ee_position,
                                                                  const Mat3& ee_rotation);
std::shared_ptr<const ClipFeatures> clip_features(const MotionClip& clip);

inline std::size_t primary_feature_width(std::size_t joints) { return joints * 9; }

// A training/evaluation window centred on frame `center`. Views into the
// shared clip features; nothing is copied.
struct MotionWindow {
    std::shared_ptr<const ClipFeatures> features;
    int center = 0;
    int T = kDefaultWindowT;
    HandoverState state = HandoverState::Idle;
    Vec3 target_next_ee = Vec3::Zero();
    std::size_t clip_index = 0;

    auto h_seen() const { return features->primary.middleRows(center - T, T + 1); }
    auto h_future() const { return features->primary.middleRows(center + 1, T); }
    auto h_full() const { return features->primary.middleRows(center - T, 2 * T + 1); }
    auto r_seen() const { return features->robot.middleRows(center - T, T + 1); }
    auto r_future() const { return features->robot.middleRows(center + 1, T); }
    auto r_full() const { return features->robot.middleRows(center - T, 2 * T + 1); }
};

// Windows are centred on t in [T, len - T - 2] with the given stride, so a
// clip of 2T+2 frames yields exactly one window. Throws TooShortError for
// shorter clips; never pads.
std::vector<MotionWindow> make_windows(const MotionClip& clip, int T = kDefaultWindowT, int stride = 1);
std::vector<MotionWindow> make_windows(std::shared_ptr<const ClipFeatures> features, int T = kDefaultWindowT,
                                       int stride = 1);
std::size_t window_count(std::size_t clip_length, int T, int stride = 1);

// ---------------------------------------------------------------- corpus

struct Corpus {
    std::shared_ptr<const Skeleton> skeleton;
    std::vector<MotionClip> clips;

    std::vector<int> pair_ids() const;  // sorted, unique
};

struct CorpusSplit {
    Corpus train;
    Corpus test;
};

// Throws LookupError for a test id absent from the corpus.
CorpusSplit participant_split(const Corpus& corpus, const std::vector<int>& test_pair_ids);

// Clip CSV: frame, per joint <name>_px,_py,_pz,_r6_0.._r6_5, then
// ee_px,ee_py,ee_pz,ee_r6_0..ee_r6_5. Joint positions are world-frame FK
// positions; rotations are local (root: global).
std::string write_clip_csv(const MotionClip& clip);
// Rebuilds poses from the rotation columns and the root position.
std::vector<Frame> read_clip_csv(const CsvTable& table, const Skeleton& skeleton);

struct CorpusSummary {
    std::size_t clips = 0;
    std::size_t frames = 0;
    std::size_t segments = 0;
    std::vector<int> pair_ids;
};

CorpusSummary summarize(const Corpus& corpus);

// Writes manifest.json plus clips/<name>.csv and clips/<name>.annotations.csv.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

std::string skeleton_to_json(const Skeleton& skeleton);
Skeleton skeleton_from_json(std::string_view json_text);

// ---------------------------------------------------------------- motion primitives

// 10 tau^3 - 15 tau^4 + 6 tau^5 for tau clamped to [0, 1].
double minimum_jerk_profile(double tau);
// Samples at k/fps for k = 0 .. round(duration*fps), the last sample at the
// end point. Throws ValidationError for duration <= 0 or fps <= 0.
std::vector<Vec3> minimum_jerk(const Vec3& start, const Vec3& end, double duration, double fps);

}  // namespace handover
