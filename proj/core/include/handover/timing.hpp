#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "handover/checkpoint.hpp"
#include "handover/dataio.hpp"
#include "handover/nn.hpp"
#include "handover/schedule.hpp"

namespace handover {

enum class TimingLabel { Center, Majority };

struct TimingConfig {
    int hidden_dim = 128;
    int T = kDefaultWindowT;
    int epochs = 500;
    double lr_start = 1e-4;
    double lr_end = 1e-7;
    int lr_decay_start_epoch = 50;
    int batch_size = 64;
    int window_stride = 1;
    double threshold = 0.6;
    double positive_weight = 1.0;  // BCE weight on handover windows; 1 = unweighted
    TimingLabel label = TimingLabel::Center;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const TimingConfig& c);
void from_json(const nlohmann::json& j, TimingConfig& c);

// Three fully connected layers on the flattened past second of primary
// motion: ELU, ELU, then a sigmoid on the scalar output.
class TimingModel {
public:
    TimingModel(const TimingConfig& config, Eigen::Index input_width);

    const TimingConfig& config() const noexcept { return config_; }
    Eigen::Index input_width() const noexcept { return input_width_; }
    nn::ParameterStore& parameters() noexcept { return store_; }
    const nn::ParameterStore& parameters() const noexcept { return store_; }

    // x: B x input_width -> B x 1 likelihoods.
    nn::Var graph(nn::Tape& tape, nn::Var x) const;

private:
    TimingConfig config_;
    Eigen::Index input_width_;
    mutable nn::ParameterStore store_;
    nn::Mlp net_;
};

// Row-major flattening of a (T+1) x width window into one row.
Eigen::RowVectorXd flatten_window(const Eigen::Ref<const Eigen::MatrixXd>& h_past);

double predict_likelihood(const TimingModel& model, const Eigen::MatrixXd& h_past);
bool classify(double likelihood, double threshold = 0.6);

inline constexpr double kBceEpsilon = 1e-7;
double bce_loss(const std::vector<double>& predictions, const std::vector<int>& labels);

// Labelled training window: the past T+1 primary frames ending at `center`.
struct TimingSample {
    MotionWindow window;
    int label = 0;
    Activity activity = Activity::NeutralPose;
};

std::vector<TimingSample> timing_samples(const Corpus& corpus, const TimingConfig& config);

struct TimingEpochLog {
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double accuracy = 0.0;
};

std::string timing_log_csv(const std::vector<TimingEpochLog>& log);

struct TimingTrainResult {
    TimingModel model;
    std::vector<TimingEpochLog> log;
};

TimingTrainResult train_timing(const Corpus& train, const TimingConfig& config,
                               const std::function<void(const std::string&)>& progress = {});
TimingTrainResult train_timing(const std::vector<TimingSample>& samples, Eigen::Index input_width,
                               const TimingConfig& config,
                               const std::function<void(const std::string&)>& progress = {});

struct AccuracyRow {
    std::string group;  // activity | height | distance | range | overall
    std::string label;
    std::size_t segments = 0;
    double segment_accuracy = 0.0;  // percent
    std::size_t windows = 0;
    double window_accuracy = 0.0;  // percent
};

// Predicts "handover in progress" for each window of `features` ending at
// the given centres (past frames only); one decision per centre.
using HandoverPredictor = std::function<std::vector<bool>(const ClipFeatures& features, const std::vector<int>& centers)>;

struct AccuracyOptions {
    int T = kDefaultWindowT;
    int window_stride = 1;
};

// Segment-level accuracy: every maximal run of one state (idle runs
// included) is a segment, correct when more than half of its windows are
// classified correctly. Rows: 13 activities, 7 parameter rows, overall.
std::vector<AccuracyRow> accuracy_report(const HandoverPredictor& predictor, const Corpus& corpus,
                                         const AccuracyOptions& options = {});
std::vector<AccuracyRow> accuracy_report(const TimingModel& model, const Corpus& corpus, int window_stride = 1);
std::string accuracy_report_csv(const std::vector<AccuracyRow>& rows);

Checkpoint timing_checkpoint(const TimingModel& model, const std::vector<TimingEpochLog>& log);
TimingModel timing_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace handover
