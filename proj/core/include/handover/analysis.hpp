#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "handover/dataio.hpp"
#include "handover/nn.hpp"
#include "handover/rot.hpp"
#include "handover/svae.hpp"
#include "handover/timing.hpp"

namespace handover {

enum class ImportanceChannel { Position, Rotation };
std::string_view to_string(ImportanceChannel c);

struct ImportanceRow {
    int rank = 0;
    std::string joint;
    ImportanceChannel channel = ImportanceChannel::Position;
    double magnitude = 0.0;
};

// Position rows ranked 1..J, then rotation rows ranked 1..J.
struct JointImportanceTable {
    std::vector<ImportanceRow> rows;

    std::vector<ImportanceRow> channel(ImportanceChannel c) const;
};

// Builds a differentiable map from one window to the model output. The
// returned pair is (primary-input leaf, output row); the leaf must be a
// frames x (joints * 9) block of primary features.
using SensitivityGraph = std::function<std::pair<nn::Var, nn::Var>(nn::Tape& tape, const MotionWindow& window)>;

// Sum over output coordinates of |d output / d input| for one window.
Eigen::MatrixXd input_sensitivity(const SensitivityGraph& graph, const MotionWindow& window);

// Mean over windows of the summed sensitivity of each joint's position
// (3) and rotation (6) coordinates across all frames; sorted descending,
// ties broken by joint index.
JointImportanceTable joint_importance(const SensitivityGraph& graph, const std::vector<MotionWindow>& windows,
                                      const Skeleton& skeleton);

// Deterministic (mean-latent) graphs of the trained models.
SensitivityGraph svae_sensitivity(const SvaeModel& model);
SensitivityGraph rot_sensitivity(const RotModel& model);
SensitivityGraph timing_sensitivity(const TimingModel& model);

std::string importance_csv(const JointImportanceTable& table);

struct TransferPoint {
    std::string clip;
    Activity activity = Activity::NeutralPose;
    HandoverState kind = HandoverState::HandingOver;
    double duration = 0.0;
    RegionOfTransfer rot;  // hip frame at transfer
    Vec3 primary_palm = Vec3::Zero();
    Vec3 robot_palm = Vec3::Zero();
};

struct HandoverStats {
    std::size_t segments = 0;
    double duration_mean = 0.0;  // s
    double duration_std = 0.0;   // population
    std::vector<double> durations;
    std::vector<TransferPoint> transfers;
};

// Segment durations are (end - start + 1) / fps. Transfers are expressed
// in the user's hip frame, so they do not depend on where the clip was
// recorded.
HandoverStats handover_stats(const Corpus& corpus);

std::string stats_summary_csv(const HandoverStats& stats);
std::string stats_points_csv(const HandoverStats& stats);
// Front (x-y) and top (x-z) scatter panels of the handover locations and
// of both palms, coloured by activity.
std::string stats_svg(const HandoverStats& stats);

}  // namespace handover
