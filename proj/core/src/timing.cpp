#include "handover/timing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "handover/error.hpp"
#include "handover/log.hpp"
#include "json_util.hpp"

namespace handover {

using nn::Matrix;
using nn::Tape;
using nn::Var;

void TimingConfig::validate() const {
    if (hidden_dim <= 0 || T <= 0) throw ConfigError("timing: dimensions must be positive");
    if (epochs <= 0 || batch_size <= 0 || window_stride <= 0)
        throw ConfigError("timing: epochs/batch/stride must be positive");
    if (!(lr_start > 0.0) || !(lr_end > 0.0) || lr_decay_start_epoch < 0)
        throw ConfigError("timing: invalid learning rate");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("timing: threshold must lie in [0, 1]");
    if (!(positive_weight > 0.0)) throw ConfigError("timing: positive_weight must be positive");
}

void to_json(nlohmann::json& j, const TimingConfig& c) {
    j = nlohmann::json{{"hidden_dim", c.hidden_dim},
                       {"T", c.T},
                       {"epochs", c.epochs},
                       {"lr_start", c.lr_start},
                       {"lr_end", c.lr_end},
                       {"lr_decay_start_epoch", c.lr_decay_start_epoch},
                       {"batch_size", c.batch_size},
                       {"window_stride", c.window_stride},
                       {"threshold", c.threshold},
                       {"positive_weight", c.positive_weight},
                       {"label", c.label == TimingLabel::Center ? "center" : "majority"},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TimingConfig& c) {
    constexpr std::string_view s = "timing";
    detail::reject_unknown_keys(j,
                                {"hidden_dim", "T", "epochs", "lr_start", "lr_end", "lr_decay_start_epoch",
                                 "batch_size", "window_stride", "threshold", "positive_weight", "label", "seed"},
                                s);
    detail::read_key(j, "hidden_dim", c.hidden_dim, s);
    detail::read_key(j, "T", c.T, s);
    detail::read_key(j, "epochs", c.epochs, s);
    detail::read_key(j, "lr_start", c.lr_start, s);
    detail::read_key(j, "lr_end", c.lr_end, s);
    detail::read_key(j, "lr_decay_start_epoch", c.lr_decay_start_epoch, s);
    detail::read_key(j, "batch_size", c.batch_size, s);
    detail::read_key(j, "window_stride", c.window_stride, s);
    detail::read_key(j, "threshold", c.threshold, s);
    detail::read_key(j, "positive_weight", c.positive_weight, s);
    std::string label = c.label == TimingLabel::Center ? "center" : "majority";
    detail::read_key(j, "label", label, s);
    if (label == "center")
        c.label = TimingLabel::Center;
    else if (label == "majority")
        c.label = TimingLabel::Majority;
    else
        throw ConfigError("timing: label must be 'center' or 'majority', got '" + label + "'");
    detail::read_key(j, "seed", c.seed, s);
}

TimingModel::TimingModel(const TimingConfig& config, Eigen::Index input_width)
    : config_(config), input_width_(input_width) {
    config_.validate();
    if (input_width <= 0) throw ConfigError("timing: input width must be positive");
    Rng rng(derive_seed(config_.seed, "timing-init"));
    net_ = nn::Mlp::create(store_, "timing", {input_width, config_.hidden_dim, config_.hidden_dim, 1}, rng,
                           nn::Activation::Elu, nn::Activation::Sigmoid);
}

Var TimingModel::graph(Tape& tape, Var x) const { return net_(tape, store_, x); }

Eigen::RowVectorXd flatten_window(const Eigen::Ref<const Eigen::MatrixXd>& h_past) {
    Eigen::RowVectorXd out(h_past.size());
    for (Eigen::Index r = 0; r < h_past.rows(); ++r) out.segment(r * h_past.cols(), h_past.cols()) = h_past.row(r);
    return out;
}

double predict_likelihood(const TimingModel& model, const Eigen::MatrixXd& h_past) {
    if (h_past.rows() != model.config().T + 1 || h_past.size() != model.input_width())
        throw ValidationError("predict_likelihood: expected " + std::to_string(model.config().T + 1) +
                              " frames totalling " + std::to_string(model.input_width()) + " values");
    Tape tape;
    const Var y = model.graph(tape, tape.constant(flatten_window(h_past)));
    return tape.value(y)(0, 0);
}

bool classify(double likelihood, double threshold) {
    if (!(likelihood >= 0.0 && likelihood <= 1.0)) throw ValidationError("classify: likelihood outside [0, 1]");
    return likelihood > threshold;
}

double bce_loss(const std::vector<double>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size()) throw ValidationError("bce_loss: size mismatch");
    if (predictions.empty()) throw ValidationError("bce_loss: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw ValidationError("bce_loss: labels must be 0 or 1");
        const double p = std::clamp(predictions[i], kBceEpsilon, 1.0 - kBceEpsilon);
        s += labels[i] ? std::log(p) : std::log(1.0 - p);
    }
    return -s / static_cast<double>(predictions.size());
}

namespace {

int window_label(const ClipFeatures& f, int center, int T, TimingLabel mode) {
    if (mode == TimingLabel::Center) return f.states[static_cast<std::size_t>(center)] != HandoverState::Idle;
    int active = 0;
    for (int k = center - T; k <= center; ++k) active += f.states[static_cast<std::size_t>(k)] != HandoverState::Idle;
    return 2 * active > T + 1 ? 1 : 0;
}

}  // namespace

std::vector<TimingSample> timing_samples(const Corpus& corpus, const TimingConfig& config) {
    std::vector<TimingSample> out;
    for (std::size_t ci = 0; ci < corpus.clips.size(); ++ci) {
        const auto& clip = corpus.clips[ci];
        auto f = clip_features(clip);
        for (int c = config.T; c < static_cast<int>(f->frames()); c += config.window_stride) {
            TimingSample s;
            s.window.features = f;
            s.window.center = c;
            s.window.T = config.T;
            s.window.clip_index = ci;
            s.window.state = f->states[static_cast<std::size_t>(c)];
            s.label = window_label(*f, c, config.T, config.label);
            s.activity = clip.activity;
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::string timing_log_csv(const std::vector<TimingEpochLog>& log) {
    std::ostringstream os;
    os << "epoch,lr,loss,accuracy\n";
    for (const auto& r : log)
        os << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.loss) << ',' << format_double(r.accuracy)
           << '\n';
    return os.str();
}

TimingTrainResult train_timing(const std::vector<TimingSample>& samples, Eigen::Index input_width,
                               const TimingConfig& config, const std::function<void(const std::string&)>& progress) {
    config.validate();
    if (samples.empty()) throw ValidationError("timing: no training samples");
    TimingTrainResult result{TimingModel(config, input_width), {}};
    TimingModel& model = result.model;
    nn::Adam adam;
    std::vector<std::size_t> order(samples.size());
    const int T = config.T;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        TimingEpochLog row;
        row.epoch = epoch;
        row.lr = lr_schedule(epoch, config.epochs, config.lr_start, config.lr_end, config.lr_decay_start_epoch);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(config.seed, "timing-order", static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), s + static_cast<std::size_t>(config.batch_size));
            const auto B = static_cast<Eigen::Index>(end - s);
            Matrix x(B, input_width), y(B, 1), w(B, 1);
            for (Eigen::Index i = 0; i < B; ++i) {
                const auto& smp = samples[order[s + static_cast<std::size_t>(i)]];
                const auto h = smp.window.features->primary.middleRows(smp.window.center - T, T + 1);
                if (h.size() != input_width) throw ValidationError("timing: sample does not match the input width");
                x.row(i) = flatten_window(h);
                y(i, 0) = smp.label;
                w(i, 0) = smp.label ? config.positive_weight : 1.0;
            }
            Tape tape;
            const Var p = model.graph(tape, tape.constant(x));
            // Clamped BCE; the clamp only matters where the sigmoid saturates.
            const Matrix pv = tape.value(p).cwiseMax(kBceEpsilon).cwiseMin(1.0 - kBceEpsilon);
            double batch_loss = 0.0;
            Matrix grad(B, 1);
            for (Eigen::Index i = 0; i < B; ++i) {
                const double q = pv(i, 0);
                batch_loss -= w(i, 0) * (y(i, 0) * std::log(q) + (1.0 - y(i, 0)) * std::log(1.0 - q));
                const bool clamped = tape.value(p)(i, 0) != q;
                grad(i, 0) = clamped ? 0.0 : -w(i, 0) * (y(i, 0) / q - (1.0 - y(i, 0)) / (1.0 - q)) / static_cast<double>(B);
                correct += static_cast<std::size_t>((tape.value(p)(i, 0) > config.threshold) == (y(i, 0) > 0.5));
            }
            batch_loss /= static_cast<double>(B);
            if (!std::isfinite(batch_loss))
                throw NumericError("timing: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(s / static_cast<std::size_t>(config.batch_size)));
            model.parameters().zero_grad();
            tape.backward(p, grad);
            adam.step(model.parameters(), row.lr);
            loss_sum += batch_loss * static_cast<double>(B);
        }
        row.loss = loss_sum / static_cast<double>(samples.size());
        row.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
        std::ostringstream os;
        os << "timing epoch " << epoch << " lr " << format_double(row.lr) << " loss " << format_double(row.loss)
           << " accuracy " << format_double(row.accuracy);
        if (progress) progress(os.str());
        log_info(os.str());
        result.log.push_back(row);
    }
    return result;
}

TimingTrainResult train_timing(const Corpus& train, const TimingConfig& config,
                               const std::function<void(const std::string&)>& progress) {
    config.validate();
    if (!train.skeleton) throw ValidationError("timing: corpus has no skeleton");
    const auto width = static_cast<Eigen::Index>(primary_feature_width(train.skeleton->size())) * (config.T + 1);
    return train_timing(timing_samples(train, config), width, config, progress);
}

// ---------------------------------------------------------------- report

namespace {

struct Tally {
    std::size_t segments = 0, segments_ok = 0, windows = 0, windows_ok = 0;
    void add(const Tally& o) {
        segments += o.segments;
        segments_ok += o.segments_ok;
        windows += o.windows;
        windows_ok += o.windows_ok;
    }
};

AccuracyRow to_row(std::string group, std::string label, const Tally& t) {
    AccuracyRow r;
    r.group = std::move(group);
    r.label = std::move(label);
    r.segments = t.segments;
    r.windows = t.windows;
    r.segment_accuracy = t.segments ? 100.0 * static_cast<double>(t.segments_ok) / static_cast<double>(t.segments)
                                    : std::nan("");
    r.window_accuracy =
        t.windows ? 100.0 * static_cast<double>(t.windows_ok) / static_cast<double>(t.windows) : std::nan("");
    return r;
}

}  // namespace

std::vector<AccuracyRow> accuracy_report(const HandoverPredictor& predictor, const Corpus& corpus,
                                         const AccuracyOptions& options) {
    if (corpus.clips.empty()) throw ValidationError("accuracy_report: empty corpus");
    if (options.window_stride <= 0 || options.T <= 0) throw ValidationError("accuracy_report: bad window options");
    std::array<Tally, kNumActivities> per_activity{};
    for (const auto& clip : corpus.clips) {
        const auto f = clip_features(clip);
        const auto n = static_cast<int>(f->frames());
        Tally& tally = per_activity[static_cast<std::size_t>(clip.activity)];
        std::vector<int> centers;
        for (int c = options.T; c < n; c += options.window_stride) centers.push_back(c);
        const auto decisions = predictor(*f, centers);
        if (decisions.size() != centers.size()) throw ValidationError("accuracy_report: predictor returned a wrong count");
        std::size_t next = 0;
        int run_start = 0;
        for (int k = 1; k <= n; ++k) {
            if (k < n && f->states[static_cast<std::size_t>(k)] == f->states[static_cast<std::size_t>(run_start)])
                continue;
            const bool positive = f->states[static_cast<std::size_t>(run_start)] != HandoverState::Idle;
            std::size_t windows = 0, ok = 0;
            for (; next < centers.size() && centers[next] < k; ++next) {
                ++windows;
                ok += static_cast<std::size_t>(decisions[next] == positive);
            }
            if (windows > 0) {
                ++tally.segments;
                tally.segments_ok += static_cast<std::size_t>(2 * ok > windows);
                tally.windows += windows;
                tally.windows_ok += ok;
            }
            run_start = k;
        }
    }
    std::vector<AccuracyRow> rows;
    Tally overall;
    Tally torso, head, on_body, mid_air, small, medium, large;
    for (Activity a : all_activities()) {
        const Tally& t = per_activity[static_cast<std::size_t>(a)];
        rows.push_back(to_row("activity", std::string(activity_slug(a)), t));
        overall.add(t);
        if (const auto p = activity_parameters(a)) {
            (p->height == ActivityHeight::Torso ? torso : head).add(t);
            (p->distance == ActivityDistance::OnBody ? on_body : mid_air).add(t);
            (p->range == MotionRange::Small ? small : p->range == MotionRange::Medium ? medium : large).add(t);
        }
    }
    rows.push_back(to_row("height", "torso", torso));
    rows.push_back(to_row("height", "head", head));
    rows.push_back(to_row("distance", "on_body", on_body));
    rows.push_back(to_row("distance", "mid_air", mid_air));
    rows.push_back(to_row("range", "small", small));
    rows.push_back(to_row("range", "medium", medium));
    rows.push_back(to_row("range", "large", large));
    rows.push_back(to_row("overall", "overall", overall));
    return rows;
}

std::vector<AccuracyRow> accuracy_report(const TimingModel& model, const Corpus& corpus, int window_stride) {
    const int T = model.config().T;
    const double threshold = model.config().threshold;
    HandoverPredictor predictor = [&](const ClipFeatures& f, const std::vector<int>& centers) {
        std::vector<bool> out;
        if (centers.empty()) return out;
        Matrix x(static_cast<Eigen::Index>(centers.size()), model.input_width());
        for (std::size_t i = 0; i < centers.size(); ++i)
            x.row(static_cast<Eigen::Index>(i)) = flatten_window(f.primary.middleRows(centers[i] - T, T + 1));
        Tape tape;
        const Var y = model.graph(tape, tape.constant(x));
        for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(classify(tape.value(y)(i, 0), threshold));
        return out;
    };
    return accuracy_report(predictor, corpus, AccuracyOptions{T, window_stride});
}

std::string accuracy_report_csv(const std::vector<AccuracyRow>& rows) {
    std::ostringstream os;
    os << "group,label,segments,segment_accuracy,windows,window_accuracy\n";
    for (const auto& r : rows)
        os << r.group << ',' << r.label << ',' << r.segments << ',' << format_double(r.segment_accuracy) << ','
           << r.windows << ',' << format_double(r.window_accuracy) << '\n';
    return os.str();
}

Checkpoint timing_checkpoint(const TimingModel& model, const std::vector<TimingEpochLog>& log) {
    nlohmann::json cfg;
    cfg["timing"] = model.config();
    cfg["input_width"] = model.input_width();
    return make_checkpoint("timing", std::move(cfg), model.parameters(), timing_log_csv(log));
}

TimingModel timing_from_checkpoint(const Checkpoint& checkpoint) {
    if (checkpoint.model_type != "timing")
        throw ConsistencyError("checkpoint holds a '" + checkpoint.model_type + "' model, expected 'timing'");
    TimingConfig cfg;
    Eigen::Index width = 0;
    try {
        cfg = checkpoint.config.at("timing").get<TimingConfig>();
        width = checkpoint.config.at("input_width").get<Eigen::Index>();
    } catch (const nlohmann::json::exception& e) {
        throw ConsistencyError(std::string("timing checkpoint config: ") + e.what());
    }
    TimingModel model(cfg, width);
    restore_parameters(checkpoint, model.parameters());
    return model;
}

}  // namespace handover
