#include "handover/rot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "handover/error.hpp"
#include "handover/log.hpp"
#include "json_util.hpp"

namespace handover {

using nn::Matrix;
using nn::Tape;
using nn::Var;

RegionOfTransfer rot_ground_truth(const Vec3& primary_palm, const Vec3& robot_palm, HandoverState kind) {
    if (kind == HandoverState::Idle) throw ValidationError("rot_ground_truth: idle is not a handover kind");
    const Vec3 d = kind == HandoverState::HandingOver ? Vec3(primary_palm - robot_palm) : Vec3(robot_palm - primary_palm);
    const double n = d.norm();
    if (!(n > 1e-6)) throw DegenerateError("rot_ground_truth: palms coincide");
    return {0.5 * (primary_palm + robot_palm), d / n};
}

namespace {

std::vector<std::size_t> hand_joints(const Skeleton& skel) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < skel.size(); ++j) {
        std::string n = skel.joint(j).name;
        std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
        if (n.size() >= 4 && n.compare(n.size() - 4, 4, "hand") == 0) out.push_back(j);
    }
    if (out.empty()) throw LookupError("skeleton has no joint named '*Hand'");
    return out;
}

}  // namespace

std::optional<TransferObservation> observe_transfer(const MotionClip& clip, const HandoverSegment& segment) {
    const auto& ann = clip.annotations;
    if (segment.end >= ann.size() || segment.start > segment.end) throw ValidationError("observe_transfer: bad segment");
    std::optional<std::size_t> frame;
    for (std::size_t f = segment.start + 1; f <= segment.end; ++f)
        if (ann[f].possession != ann[segment.start].possession) {
            frame = f;
            break;
        }
    if (!frame) return std::nullopt;
    const auto& fr = clip.frames[*frame];
    const auto hip = hip_frame(fr.primary.root_position, fr.primary.root_rotation);
    if (!hip) throw DegenerateError("observe_transfer: vertical facing axis at the transfer frame");
    const auto fk = forward_kinematics(*clip.skeleton, fr.primary);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j : hand_joints(*clip.skeleton)) {
        const double d = (fk[j] - fr.robot_ee_position).norm();
        if (d < best_d) best_d = d, best = j;
    }
    TransferObservation o;
    o.transfer_frame = *frame;
    o.primary_palm = hip->to_local(fk[best]);
    o.robot_palm = hip->to_local(fr.robot_ee_position);
    o.rot = rot_ground_truth(o.primary_palm, o.robot_palm, segment.kind);
    return o;
}

// ---------------------------------------------------------------- config

void RotConfig::validate() const {
    if (latent_dim <= 0 || hidden_dim <= 0 || embed_dim <= 0 || attention_heads <= 0 || T <= 0)
        throw ConfigError("rot: dimensions must be positive");
    if (embed_dim % attention_heads != 0) throw ConfigError("rot: embed_dim must be a multiple of attention_heads");
    if (!(beta >= 0.0)) throw ConfigError("rot: beta must be non-negative");
    if (epochs <= 0 || batch_size <= 0 || window_stride <= 0) throw ConfigError("rot: epochs/batch/stride must be positive");
    if (!(lr_start > 0.0) || !(lr_end > 0.0) || lr_decay_start_epoch < 0) throw ConfigError("rot: invalid learning rate");
    if (clip_norm < 0.0) throw ConfigError("rot: clip_norm must be non-negative");
}

void to_json(nlohmann::json& j, const RotConfig& c) {
    j = nlohmann::json{{"latent_dim", c.latent_dim},   {"hidden_dim", c.hidden_dim},
                       {"embed_dim", c.embed_dim},     {"attention_heads", c.attention_heads},
                       {"T", c.T},                     {"beta", c.beta},
                       {"epochs", c.epochs},           {"lr_start", c.lr_start},
                       {"lr_end", c.lr_end},           {"lr_decay_start_epoch", c.lr_decay_start_epoch},
                       {"batch_size", c.batch_size},   {"window_stride", c.window_stride},
                       {"clip_norm", c.clip_norm},     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RotConfig& c) {
    constexpr std::string_view s = "rot";
    detail::reject_unknown_keys(j,
                                {"latent_dim", "hidden_dim", "embed_dim", "attention_heads", "T", "beta", "epochs",
                                 "lr_start", "lr_end", "lr_decay_start_epoch", "batch_size", "window_stride",
                                 "clip_norm", "seed"},
                                s);
    detail::read_key(j, "latent_dim", c.latent_dim, s);
    detail::read_key(j, "hidden_dim", c.hidden_dim, s);
    detail::read_key(j, "embed_dim", c.embed_dim, s);
    detail::read_key(j, "attention_heads", c.attention_heads, s);
    detail::read_key(j, "T", c.T, s);
    detail::read_key(j, "beta", c.beta, s);
    detail::read_key(j, "epochs", c.epochs, s);
    detail::read_key(j, "lr_start", c.lr_start, s);
    detail::read_key(j, "lr_end", c.lr_end, s);
    detail::read_key(j, "lr_decay_start_epoch", c.lr_decay_start_epoch, s);
    detail::read_key(j, "batch_size", c.batch_size, s);
    detail::read_key(j, "window_stride", c.window_stride, s);
    detail::read_key(j, "clip_norm", c.clip_norm, s);
    detail::read_key(j, "seed", c.seed, s);
}

// ---------------------------------------------------------------- model

RotModel::RotModel(const RotConfig& config, Eigen::Index primary_width)
    : config_(config), primary_width_(primary_width) {
    config_.validate();
    if (primary_width <= 0) throw ConfigError("rot: primary feature width must be positive");
    Rng rng(derive_seed(config_.seed, "rot-init"));
    encoder_ = nn::AttentionEncoder::create(store_, "encoder", primary_width + kRobotFeatureWidth, config_.T + 1,
                                            config_.embed_dim, config_.attention_heads, 0, config_.hidden_dim,
                                            config_.latent_dim, rng);
    decoder_ = nn::Mlp::create(store_, "decoder", {config_.latent_dim + context_width(), config_.hidden_dim,
                                                   config_.hidden_dim, 6},
                               rng);
}

RotModel::GraphOut RotModel::graph(Tape& tape, Var h_past, Var r_past, Var context, const Eigen::MatrixXd* eps) const {
    GraphOut g;
    g.latent = encoder_(tape, store_, tape.concat_cols({h_past, r_past}), Var{});
    const Var z = eps ? nn::gaussian_sample(tape, g.latent.mu, g.latent.log_var, *eps) : g.latent.mu;
    g.output = decoder_(tape, store_, tape.concat_cols({z, context}));
    return g;
}

namespace {

struct RotBatch {
    Matrix h, r, context, label;
};

RotBatch gather(const RotModel& model, const std::vector<const RotSample*>& samples) {
    const int T = model.config().T;
    const auto B = static_cast<Eigen::Index>(samples.size());
    const Eigen::Index L = T + 1;
    RotBatch b;
    b.h.resize(B * L, model.primary_width());
    b.r.resize(B * L, kRobotFeatureWidth);
    b.context.resize(B, model.context_width());
    b.label.resize(B, 6);
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto& s = *samples[static_cast<std::size_t>(i)];
        if (s.window.T != T || s.window.features->primary.cols() != model.primary_width())
            throw ValidationError("rot: window does not match model");
        b.h.middleRows(i * L, L) = s.window.h_seen();
        b.r.middleRows(i * L, L) = s.window.r_seen();
        b.context.row(i) = decoder_context(s.window.h_seen(), s.window.r_seen());
        b.label.row(i).head<3>() = s.label.position.transpose();
        b.label.row(i).tail<3>() = s.label.direction.transpose();
    }
    return b;
}

RegionOfTransfer to_rot(const Eigen::RowVectorXd& out) {
    RegionOfTransfer r;
    r.position = out.head<3>().transpose();
    const Vec3 d = out.tail<3>().transpose();
    const double n = d.norm();
    r.direction = n > 1e-12 ? Vec3(d / n) : Vec3::UnitZ();
    return r;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {std::nan(""), std::nan("")};
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double sq = 0.0;
    for (double x : v) sq += (x - m) * (x - m);
    return {m, std::sqrt(sq / static_cast<double>(v.size()))};
}

}  // namespace

RegionOfTransfer predict_rot(const RotModel& model, const Eigen::MatrixXd& h_past, const Eigen::MatrixXd& r_past) {
    const int T = model.config().T;
    if (h_past.rows() != T + 1 || r_past.rows() != T + 1 || h_past.cols() != model.primary_width() ||
        r_past.cols() != kRobotFeatureWidth)
        throw ValidationError("predict_rot: expected past windows of " + std::to_string(T + 1) + " frames");
    Tape tape;
    const auto g = model.graph(tape, tape.constant(h_past), tape.constant(r_past),
                               tape.constant(decoder_context(h_past, r_past)), nullptr);
    return to_rot(tape.value(g.output).row(0));
}

double rot_loss(const Eigen::Matrix<double, 6, 1>& pred, const Eigen::Matrix<double, 6, 1>& truth) {
    return 0.5 * ((pred.head<3>() - truth.head<3>()).squaredNorm() + (pred.tail<3>() - truth.tail<3>()).squaredNorm());
}

double rot_loss(const RegionOfTransfer& pred, const RegionOfTransfer& truth) {
    Eigen::Matrix<double, 6, 1> a, b;
    a << pred.position, pred.direction;
    b << truth.position, truth.direction;
    return rot_loss(a, b);
}

double meae(const Vec3& a, const Vec3& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateError("meae: zero direction");
    const Vec3 u = a / na;
    const Vec3 v = b / nb;
    double dyaw = std::atan2(u.x(), u.z()) - std::atan2(v.x(), v.z());
    dyaw = std::remainder(dyaw, 2.0 * std::numbers::pi);
    const double dpitch = std::asin(std::clamp(u.y(), -1.0, 1.0)) - std::asin(std::clamp(v.y(), -1.0, 1.0));
    return 0.5 * (std::abs(dyaw) + std::abs(dpitch));
}

std::vector<RotSample> rot_samples(const Corpus& corpus, int T, int stride) {
    std::vector<RotSample> out;
    for (std::size_t ci = 0; ci < corpus.clips.size(); ++ci) {
        const auto& clip = corpus.clips[ci];
        const auto segments = segment_handovers(clip);
        if (segments.empty()) continue;
        std::shared_ptr<const ClipFeatures> feats = clip_features(clip);
        if (feats->frames() < 2 * T + 2) continue;
        auto windows = make_windows(feats, T, stride);
        for (auto& w : windows) w.clip_index = ci;
        for (const auto& seg : segments) {
            const auto obs = observe_transfer(clip, seg);
            if (!obs) {
                log_warning("clip '" + clip.name + "': possession never changes inside a segment; skipped");
                continue;
            }
            for (const auto& w : windows)
                if (static_cast<std::size_t>(w.center) >= seg.start && static_cast<std::size_t>(w.center) <= seg.end)
                    out.push_back({w, obs->rot, clip.activity});
        }
    }
    return out;
}

std::string rot_log_csv(const std::vector<RotEpochLog>& log) {
    std::ostringstream os;
    os << "epoch,lr,rot,kl,loss\n";
    for (const auto& r : log)
        os << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.rot) << ',' << format_double(r.kl) << ','
           << format_double(r.loss) << '\n';
    return os.str();
}

RotTrainResult train_rot(const std::vector<RotSample>& samples, Eigen::Index primary_width, const RotConfig& config,
                         const EpochCallback& progress) {
    config.validate();
    if (samples.empty()) throw ValidationError("rot: no training samples");
    RotTrainResult result{RotModel(config, primary_width), {}};
    RotModel& model = result.model;
    nn::Adam adam(nn::AdamOptions{.clip_norm = config.clip_norm});
    std::vector<std::size_t> order(samples.size());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        RotEpochLog row;
        row.epoch = epoch;
        row.lr = lr_schedule(epoch, config.epochs, config.lr_start, config.lr_end, config.lr_decay_start_epoch);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(config.seed, "rot-order", static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        Rng noise(derive_seed(config.seed, "rot-noise", static_cast<std::uint64_t>(epoch)));
        std::size_t batches = 0;
        for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(config.batch_size)) {
            std::vector<const RotSample*> batch;
            for (std::size_t k = s; k < std::min(order.size(), s + static_cast<std::size_t>(config.batch_size)); ++k)
                batch.push_back(&samples[order[k]]);
            const RotBatch b = gather(model, batch);
            const auto B = static_cast<double>(batch.size());
            const Matrix eps = nn::standard_normal_matrix(b.context.rows(), config.latent_dim, noise);
            Tape tape;
            const auto g = model.graph(tape, tape.constant(b.h), tape.constant(b.r), tape.constant(b.context), &eps);
            const Var rl = tape.scale(tape.sum(tape.square(tape.sub(g.output, tape.constant(b.label)))), 0.5 / B);
            const Var kl = nn::kl_standard_normal(tape, g.latent.mu, g.latent.log_var);
            const Var loss = tape.add(rl, tape.scale(kl, config.beta));
            const double lv = tape.value(loss)(0, 0);
            if (!std::isfinite(lv))
                throw NumericError("rot: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batches));
            model.parameters().zero_grad();
            tape.backward(loss);
            adam.step(model.parameters(), row.lr);
            row.rot += tape.value(rl)(0, 0);
            row.kl += tape.value(kl)(0, 0);
            row.loss += lv;
            ++batches;
        }
        row.rot /= static_cast<double>(batches);
        row.kl /= static_cast<double>(batches);
        row.loss /= static_cast<double>(batches);
        std::ostringstream os;
        os << "rot epoch " << epoch << " lr " << format_double(row.lr) << " rot " << format_double(row.rot) << " kl "
           << format_double(row.kl) << " loss " << format_double(row.loss);
        if (progress) progress(os.str());
        log_info(os.str());
        result.log.push_back(row);
    }
    return result;
}

RotTrainResult train_rot(const Corpus& train, const RotConfig& config, const EpochCallback& progress) {
    config.validate();
    if (!train.skeleton) throw ValidationError("rot: corpus has no skeleton");
    const auto samples = rot_samples(train, config.T, config.window_stride);
    return train_rot(samples, static_cast<Eigen::Index>(primary_feature_width(train.skeleton->size())), config, progress);
}

std::vector<RotReportRow> evaluate_rot(const RotModel& model, const Corpus& corpus, int stride) {
    const auto samples = rot_samples(corpus, model.config().T, stride);
    if (samples.empty()) throw ValidationError("evaluate_rot: corpus has no handover windows");
    std::array<std::vector<double>, kNumActivities> pos_err, ang_err;
    for (std::size_t s = 0; s < samples.size(); s += 256) {
        std::vector<const RotSample*> batch;
        for (std::size_t k = s; k < std::min(samples.size(), s + 256); ++k) batch.push_back(&samples[k]);
        const RotBatch b = gather(model, batch);
        Tape tape;
        const auto g = model.graph(tape, tape.constant(b.h), tape.constant(b.r), tape.constant(b.context), nullptr);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const auto pred = to_rot(tape.value(g.output).row(static_cast<Eigen::Index>(i)));
            const auto a = static_cast<std::size_t>(batch[i]->activity);
            pos_err[a].push_back((pred.position - batch[i]->label.position).cwiseAbs().mean());
            ang_err[a].push_back(meae(pred.direction, batch[i]->label.direction));
        }
    }
    std::vector<RotReportRow> rows;
    std::vector<double> all_pos, all_ang;
    auto make = [](const std::string& label, const std::vector<double>& p, const std::vector<double>& q) {
        RotReportRow r;
        r.label = label;
        r.windows = p.size();
        const auto [pm, ps] = mean_std(p);
        const auto [qm, qs] = mean_std(q);
        r.mae_cm = 100.0 * pm;
        r.mae_std_cm = 100.0 * ps;
        r.meae_rad = qm;
        r.meae_std_rad = qs;
        return r;
    };
    for (Activity act : all_activities()) {
        const auto a = static_cast<std::size_t>(act);
        if (pos_err[a].empty()) continue;
        rows.push_back(make(std::string(activity_slug(act)), pos_err[a], ang_err[a]));
        all_pos.insert(all_pos.end(), pos_err[a].begin(), pos_err[a].end());
        all_ang.insert(all_ang.end(), ang_err[a].begin(), ang_err[a].end());
    }
    rows.push_back(make("overall", all_pos, all_ang));
    return rows;
}

std::string rot_report_csv(const std::vector<RotReportRow>& rows) {
    std::ostringstream os;
    os << "activity,MAE_cm,MAE_std,MEAE_rad,MEAE_std\n";
    for (const auto& r : rows)
        os << r.label << ',' << format_double(r.mae_cm) << ',' << format_double(r.mae_std_cm) << ','
           << format_double(r.meae_rad) << ',' << format_double(r.meae_std_rad) << '\n';
    return os.str();
}

Checkpoint rot_checkpoint(const RotModel& model, const std::vector<RotEpochLog>& log) {
    nlohmann::json cfg;
    cfg["rot"] = model.config();
    cfg["primary_width"] = model.primary_width();
    return make_checkpoint("rot", std::move(cfg), model.parameters(), rot_log_csv(log));
}

RotModel rot_from_checkpoint(const Checkpoint& checkpoint) {
    if (checkpoint.model_type != "rot")
        throw ConsistencyError("checkpoint holds a '" + checkpoint.model_type + "' model, expected 'rot'");
    RotConfig cfg;
    Eigen::Index width = 0;
    try {
        cfg = checkpoint.config.at("rot").get<RotConfig>();
        width = checkpoint.config.at("primary_width").get<Eigen::Index>();
    } catch (const nlohmann::json::exception& e) {
        throw ConsistencyError(std::string("rot checkpoint config: ") + e.what());
    }
    RotModel model(cfg, width);
    restore_parameters(checkpoint, model.parameters());
    return model;
}

}  // namespace handover
