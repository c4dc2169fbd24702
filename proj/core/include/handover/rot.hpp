#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "handover/checkpoint.hpp"
#include "handover/dataio.hpp"
#include "handover/nn.hpp"
#include "handover/svae.hpp"

namespace handover {

// Midpoint of the two palms and the unit giver -> receiver axis.
struct RegionOfTransfer {
    Vec3 position = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();
};

// The robot gives during HandingOver, the primary user during TakingBack.
RegionOfTransfer rot_ground_truth(const Vec3& primary_palm, const Vec3& robot_palm, HandoverState kind);

// What happened at the moment of transfer inside one segment, in the hip
// frame of the transfer frame.
struct TransferObservation {
    std::size_t transfer_frame = 0;
    Vec3 primary_palm = Vec3::Zero();
    Vec3 robot_palm = Vec3::Zero();
    RegionOfTransfer rot;
};

// The transfer frame is the first frame of the segment whose possession
// differs from the segment's first frame; the primary palm is whichever
// of the user's hand joints is nearest the end-effector there. Empty when
// possession never changes inside the segment.
std::optional<TransferObservation> observe_transfer(const MotionClip& clip, const HandoverSegment& segment);

struct RotConfig {
    int latent_dim = 32;
    int hidden_dim = 256;
    int embed_dim = 64;
    int attention_heads = 4;
    int T = kDefaultWindowT;
    double beta = 0.1;
    int epochs = 250;
    double lr_start = 1e-4;
    double lr_end = 1e-7;
    int lr_decay_start_epoch = 50;
    int batch_size = 32;
    int window_stride = 1;
    double clip_norm = 10.0;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const RotConfig& c);
void from_json(const nlohmann::json& j, RotConfig& c);

class RotModel {
public:
    RotModel(const RotConfig& config, Eigen::Index primary_width);

    const RotConfig& config() const noexcept { return config_; }
    Eigen::Index primary_width() const noexcept { return primary_width_; }
    nn::ParameterStore& parameters() noexcept { return store_; }
    const nn::ParameterStore& parameters() const noexcept { return store_; }

    // Batched graph: frames stacked (B * (T+1)) x width, context B x C.
    // Returns the raw B x 6 output and the posterior.
    struct GraphOut {
        nn::Var output;
        nn::AttentionEncoder::Output latent;
    };
    GraphOut graph(nn::Tape& tape, nn::Var h_past, nn::Var r_past, nn::Var context, const Eigen::MatrixXd* eps) const;

    Eigen::Index context_width() const noexcept { return primary_width_ + kRobotFeatureWidth + 3 * (config_.T + 1); }

private:
    RotConfig config_;
    Eigen::Index primary_width_;
    mutable nn::ParameterStore store_;
    nn::AttentionEncoder encoder_;
    nn::Mlp decoder_;
};

// Mean-latent prediction; the direction is renormalized.
RegionOfTransfer predict_rot(const RotModel& model, const Eigen::MatrixXd& h_past, const Eigen::MatrixXd& r_past);

// 0.5 * (|p_hat - p|^2 + |q_hat - q|^2)
double rot_loss(const RegionOfTransfer& pred, const RegionOfTransfer& truth);
double rot_loss(const Eigen::Matrix<double, 6, 1>& pred, const Eigen::Matrix<double, 6, 1>& truth);

// Mean of |d yaw| and |d pitch| between the spherical angles of two
// directions, yaw = atan2(x, z) wrapped to (-pi, pi], pitch = asin(y).
double meae(const Vec3& a, const Vec3& b);

struct RotSample {
    MotionWindow window;
    RegionOfTransfer label;
    Activity activity = Activity::NeutralPose;
};

// Every window whose centre lies inside a handover segment, labelled with
// that segment's transfer.
std::vector<RotSample> rot_samples(const Corpus& corpus, int T, int stride = 1);

struct RotEpochLog {
    int epoch = 0;
    double lr = 0.0;
    double rot = 0.0;
    double kl = 0.0;
    double loss = 0.0;
};

std::string rot_log_csv(const std::vector<RotEpochLog>& log);

struct RotTrainResult {
    RotModel model;
    std::vector<RotEpochLog> log;
};

RotTrainResult train_rot(const Corpus& train, const RotConfig& config, const EpochCallback& progress = {});
RotTrainResult train_rot(const std::vector<RotSample>& samples, Eigen::Index primary_width, const RotConfig& config,
                         const EpochCallback& progress = {});

struct RotReportRow {
    std::string label;
    std::size_t windows = 0;
    double mae_cm = 0.0;
    double mae_std_cm = 0.0;
    double meae_rad = 0.0;
    double meae_std_rad = 0.0;
};

std::vector<RotReportRow> evaluate_rot(const RotModel& model, const Corpus& corpus, int stride = 1);
std::string rot_report_csv(const std::vector<RotReportRow>& rows);

Checkpoint rot_checkpoint(const RotModel& model, const std::vector<RotEpochLog>& log);
RotModel rot_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace handover
