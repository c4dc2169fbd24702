#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "handover/checkpoint.hpp"
#include "handover/dataio.hpp"
#include "handover/nn.hpp"
#include "handover/schedule.hpp"

namespace handover {

struct SvaeConfig {
    int latent_dim = 32;
    int hidden_dim = 256;
    int embed_dim = 64;  // per-frame embedding inside the attention encoders
    int num_experts = 6;
    int T = kDefaultWindowT;
    double beta = 0.1;
    int attention_heads = 4;
    int stage1_epochs = 140;
    int stage2_epochs = 100;
    int stage2_kl_only_epochs = 50;
    double lr_start = 1e-4;
    double lr_end = 1e-7;
    int lr_decay_start_epoch = 50;
    int rollout_len = 10;
    int sched_sampling_ramp_epochs = 50;
    int recon_only_epochs = 10;
    int batch_size = 32;
    int chunk_stride = 10;  // frames between consecutive training chunks of one clip
    double clip_norm = 10.0;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const SvaeConfig& c);
void from_json(const nlohmann::json& j, SvaeConfig& c);  // rejects unknown keys

struct LatentDistribution {
    Eigen::VectorXd mu;
    Eigen::VectorXd log_var;
};

enum class SvaeStage { FullEncoder = 1, LatentController = 2 };

struct ElboTerms {
    double loss = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

// Decoder conditioning assembled from a seen window: the current primary
// frame, the current robot frame and the seen robot positions relative to
// the current end-effector position.
Eigen::RowVectorXd decoder_context(const Eigen::Ref<const Eigen::MatrixXd>& h_seen,
                                   const Eigen::Ref<const Eigen::MatrixXd>& r_seen);

class SvaeModel {
public:
    SvaeModel(const SvaeConfig& config, Eigen::Index primary_width);

    const SvaeConfig& config() const noexcept { return config_; }
    Eigen::Index primary_width() const noexcept { return primary_width_; }
    Eigen::Index context_width() const noexcept;
    nn::ParameterStore& parameters() noexcept { return store_; }
    const nn::ParameterStore& parameters() const noexcept { return store_; }

    LatentDistribution encode_full(const Eigen::MatrixXd& h_full, const Eigen::MatrixXd& r_full) const;
    LatentDistribution encode_lc(const Eigen::MatrixXd& h_seen, const Eigen::MatrixXd& r_seen, HandoverState state,
                                 Eigen::MatrixXd* attention = nullptr) const;
    Vec3 decode(const Eigen::VectorXd& z, const Eigen::MatrixXd& h_seen, const Eigen::MatrixXd& r_seen) const;
    // Per-expert predictions (3 x num_experts) and the gate (num_experts).
    Eigen::MatrixXd expert_outputs(const Eigen::VectorXd& z, const Eigen::MatrixXd& h_seen,
                                   const Eigen::MatrixXd& r_seen) const;
    Eigen::VectorXd gate(const Eigen::VectorXd& z, const Eigen::MatrixXd& h_seen, const Eigen::MatrixXd& r_seen) const;
    // Decode with an externally supplied gate instead of the gating network.
    Vec3 decode_with_gate(const Eigen::VectorXd& z, const Eigen::MatrixXd& h_seen, const Eigen::MatrixXd& r_seen,
                          const Eigen::VectorXd& gate) const;

    // Batched graph builders. Frames are stacked per sample:
    // (B * steps) x width; context is B x context_width.
    nn::AttentionEncoder::Output encode_full(nn::Tape& tape, nn::Var h_full, nn::Var r_full) const;
    nn::AttentionEncoder::Output encode_lc(nn::Tape& tape, nn::Var h_seen, nn::Var r_seen, nn::Var one_hot,
                                           Eigen::MatrixXd* attention = nullptr) const;
    struct DecoderOut {
        nn::Var position;  // B x 3
        nn::Var gate;      // B x K
    };
    DecoderOut decode(nn::Tape& tape, nn::Var z, nn::Var context, const Eigen::MatrixXd* forced_gate = nullptr) const;

    static constexpr const char* kFullEncoderPrefix = "encoder_full.";
    static constexpr const char* kLcPrefix = "encoder_lc.";
    static constexpr const char* kDecoderPrefix = "decoder.";

private:
    SvaeConfig config_;
    Eigen::Index primary_width_;
    mutable nn::ParameterStore store_;
    nn::AttentionEncoder enc_full_;
    nn::AttentionEncoder enc_lc_;
    std::vector<nn::Mlp> experts_;
    nn::Mlp gating_;
};

// Single-window ELBO. Stage 1 decodes z ~ q_full and regularizes q_full
// towards N(0, I); stage 2 decodes z ~ q_LC and uses KL(q_full || q_LC).
// Without `eps` the latent mean is used.
ElboTerms elbo_loss(const SvaeModel& model, const MotionWindow& window, double beta,
                    SvaeStage stage = SvaeStage::FullEncoder, const Eigen::VectorXd* eps = nullptr);
// Batched graph version used by training and gradient checks; returns the
// scalar loss and fills the mean recon/kl terms.
nn::Var elbo_graph(nn::Tape& tape, const SvaeModel& model, const std::vector<const MotionWindow*>& windows,
                   double beta, SvaeStage stage, const Eigen::MatrixXd* eps, ElboTerms* terms = nullptr);

double kl_standard_normal(const LatentDistribution& q);
double kl_divergence(const LatentDistribution& p, const LatentDistribution& q);
Eigen::VectorXd sample_latent(const LatentDistribution& q, Rng& rng);

struct SvaeEpochLog {
    int stage = 1;
    int epoch = 0;
    double lr = 0.0;
    double p = 0.0;
    double recon = 0.0;
    double kl = 0.0;
    double loss = 0.0;
    bool kl_in_loss = false;
    bool recon_in_loss = true;
};

std::string svae_log_csv(const std::vector<SvaeEpochLog>& log);

using EpochCallback = std::function<void(const std::string& line)>;

struct SvaeTrainResult {
    SvaeModel model;
    std::vector<SvaeEpochLog> log;
};

SvaeTrainResult train_stage1(const Corpus& train, const SvaeConfig& config, const EpochCallback& progress = {});
std::vector<SvaeEpochLog> train_stage2(SvaeModel& model, const Corpus& train, const EpochCallback& progress = {});

// Mean KL(q_full || q_LC) over the given windows (latent means, no sampling).
double mean_lc_kl(const SvaeModel& model, const std::vector<MotionWindow>& windows);

struct GenerateOptions {
    bool deterministic = true;  // z = mean of q_LC
    std::uint64_t seed = 0;     // used when sampling
};

Vec3 generate_next(const SvaeModel& model, const Eigen::MatrixXd& h_seen, const Eigen::MatrixXd& r_seen,
                   HandoverState state, Rng* rng = nullptr);

// Optional instrumentation of a rollout: the robot window fed to every step.
struct RolloutTrace {
    std::vector<Eigen::MatrixXd> r_windows;
};

// Autoregressive generation. Step k observes primary rows [k, k+T] of
// `h_stream` and the previous T+1 robot frames, where generated positions
// replace the oldest frames one at a time and the end-effector rotation is
// held at the last observed value.
std::vector<Vec3> rollout(const SvaeModel& model, const Eigen::MatrixXd& h_stream, const Eigen::MatrixXd& r_init,
                          int steps, const std::vector<HandoverState>& states, const GenerateOptions& options = {},
                          RolloutTrace* trace = nullptr);

// Mean over trajectories of the per-trajectory mean (over frames) of the
// per-frame mean absolute coordinate error.
double mae(const std::vector<std::vector<Vec3>>& generated, const std::vector<std::vector<Vec3>>& ground_truth);

struct SvaeReportRow {
    std::string label;
    std::size_t windows = 0;
    double mae_cm = 0.0;
    double mae_std_cm = 0.0;
    std::size_t trajectories = 0;
    double ar_mae_cm = 0.0;
    double ar_mae_std_cm = 0.0;
};

struct SvaeEvalOptions {
    int window_stride = 1;
};

// Per-activity MAE without autoregression (teacher-forced next step) and
// with autoregression (one rollout per handover segment, from the frame
// before the robot starts moving to the end of the segment). Last row is
// "Overall".
std::vector<SvaeReportRow> evaluate_svae(const SvaeModel& model, const Corpus& corpus,
                                         const SvaeEvalOptions& options = {});
std::string svae_report_csv(const std::vector<SvaeReportRow>& rows);

Checkpoint svae_checkpoint(const SvaeModel& model, const std::vector<SvaeEpochLog>& log);
SvaeModel svae_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace handover
