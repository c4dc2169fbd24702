#include "handover/svae.hpp"

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

// ---------------------------------------------------------------- config

void SvaeConfig::validate() const {
    if (latent_dim <= 0 || hidden_dim <= 0 || embed_dim <= 0 || T <= 0 || attention_heads <= 0)
        throw ConfigError("svae: dimensions must be positive");
    if (num_experts < 1) throw ConfigError("svae: num_experts must be at least 1");
    if (embed_dim % attention_heads != 0) throw ConfigError("svae: embed_dim must be a multiple of attention_heads");
    if (!(beta >= 0.0)) throw ConfigError("svae: beta must be non-negative");
    if (stage1_epochs <= 0 || stage2_epochs < 0 || stage2_kl_only_epochs < 0)
        throw ConfigError("svae: epoch counts must be positive");
    if (stage2_kl_only_epochs > stage2_epochs)
        throw ConfigError("svae: stage2_kl_only_epochs exceeds stage2_epochs");
    if (!(lr_start > 0.0) || !(lr_end > 0.0) || lr_decay_start_epoch < 0)
        throw ConfigError("svae: invalid learning-rate schedule");
    if (rollout_len <= 0 || sched_sampling_ramp_epochs < 0 || recon_only_epochs < 0)
        throw ConfigError("svae: invalid scheduled-sampling settings");
    if (batch_size <= 0 || chunk_stride <= 0) throw ConfigError("svae: batch_size and chunk_stride must be positive");
    if (clip_norm < 0.0) throw ConfigError("svae: clip_norm must be non-negative");
}

void to_json(nlohmann::json& j, const SvaeConfig& c) {
    j = nlohmann::json{{"latent_dim", c.latent_dim},
                       {"hidden_dim", c.hidden_dim},
                       {"embed_dim", c.embed_dim},
                       {"num_experts", c.num_experts},
                       {"T", c.T},
                       {"beta", c.beta},
                       {"attention_heads", c.attention_heads},
                       {"stage1_epochs", c.stage1_epochs},
                       {"stage2_epochs", c.stage2_epochs},
                       {"stage2_kl_only_epochs", c.stage2_kl_only_epochs},
                       {"lr_start", c.lr_start},
                       {"lr_end", c.lr_end},
                       {"lr_decay_start_epoch", c.lr_decay_start_epoch},
                       {"rollout_len", c.rollout_len},
                       {"sched_sampling_ramp_epochs", c.sched_sampling_ramp_epochs},
                       {"recon_only_epochs", c.recon_only_epochs},
                       {"batch_size", c.batch_size},
                       {"chunk_stride", c.chunk_stride},
                       {"clip_norm", c.clip_norm},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SvaeConfig& c) {
    constexpr std::string_view s = "svae";
    detail::reject_unknown_keys(j,
                                {"latent_dim", "hidden_dim", "embed_dim", "num_experts", "T", "beta",
                                 "attention_heads", "stage1_epochs", "stage2_epochs", "stage2_kl_only_epochs",
                                 "lr_start", "lr_end", "lr_decay_start_epoch", "rollout_len",
                                 "sched_sampling_ramp_epochs", "recon_only_epochs", "batch_size", "chunk_stride",
                                 "clip_norm", "seed"},
                                s);
    detail::read_key(j, "latent_dim", c.latent_dim, s);
    detail::read_key(j, "hidden_dim", c.hidden_dim, s);
    detail::read_key(j, "embed_dim", c.embed_dim, s);
    detail::read_key(j, "num_experts", c.num_experts, s);
    detail::read_key(j, "T", c.T, s);
    detail::read_key(j, "beta", c.beta, s);
    detail::read_key(j, "attention_heads", c.attention_heads, s);
    detail::read_key(j, "stage1_epochs", c.stage1_epochs, s);
    detail::read_key(j, "stage2_epochs", c.stage2_epochs, s);
    detail::read_key(j, "stage2_kl_only_epochs", c.stage2_kl_only_epochs, s);
    detail::read_key(j, "lr_start", c.lr_start, s);
    detail::read_key(j, "lr_end", c.lr_end, s);
    detail::read_key(j, "lr_decay_start_epoch", c.lr_decay_start_epoch, s);
    detail::read_key(j, "rollout_len", c.rollout_len, s);
    detail::read_key(j, "sched_sampling_ramp_epochs", c.sched_sampling_ramp_epochs, s);
    detail::read_key(j, "recon_only_epochs", c.recon_only_epochs, s);
    detail::read_key(j, "batch_size", c.batch_size, s);
    detail::read_key(j, "chunk_stride", c.chunk_stride, s);
    detail::read_key(j, "clip_norm", c.clip_norm, s);
    detail::read_key(j, "seed", c.seed, s);
}

// ---------------------------------------------------------------- model

Eigen::RowVectorXd decoder_context(const Eigen::Ref<const Eigen::MatrixXd>& h_seen,
                                   const Eigen::Ref<const Eigen::MatrixXd>& r_seen) {
    if (h_seen.rows() != r_seen.rows() || h_seen.rows() == 0 || r_seen.cols() != kRobotFeatureWidth)
        throw ValidationError("decoder_context: seen windows must have matching non-zero lengths");
    const Eigen::Index L = r_seen.rows();
    const Eigen::Index last = L - 1;
    Eigen::RowVectorXd ctx(h_seen.cols() + kRobotFeatureWidth + 3 * L);
    ctx.head(h_seen.cols()) = h_seen.row(last);
    ctx.segment(h_seen.cols(), kRobotFeatureWidth) = r_seen.row(last);
    const Eigen::Index o = h_seen.cols() + kRobotFeatureWidth;
    for (Eigen::Index l = 0; l < L; ++l) ctx.segment<3>(o + 3 * l) = r_seen.row(l).head<3>() - r_seen.row(last).head<3>();
    return ctx;
}

SvaeModel::SvaeModel(const SvaeConfig& config, Eigen::Index primary_width)
    : config_(config), primary_width_(primary_width) {
    config_.validate();
    if (primary_width <= 0) throw ConfigError("svae: primary feature width must be positive");
    Rng rng(derive_seed(config_.seed, "svae-init"));
    const Eigen::Index frame = primary_width + kRobotFeatureWidth;
    const Eigen::Index D = config_.latent_dim;
    const Eigen::Index H = config_.hidden_dim;
    enc_full_ = nn::AttentionEncoder::create(store_, "encoder_full", frame, 2 * config_.T + 1, config_.embed_dim,
                                             config_.attention_heads, 0, H, D, rng);
    enc_lc_ = nn::AttentionEncoder::create(store_, "encoder_lc", frame, config_.T + 1, config_.embed_dim,
                                           config_.attention_heads, kNumHandoverStates, H, D, rng);
    const Eigen::Index in = D + context_width();
    for (int k = 0; k < config_.num_experts; ++k)
        experts_.push_back(nn::Mlp::create(store_, "decoder.expert" + std::to_string(k), {in, H, H, 3}, rng,
                                           nn::Activation::Elu, nn::Activation::None, 0.1));
    gating_ = nn::Mlp::create(store_, "decoder.gate", {in, H, config_.num_experts}, rng);
}

Eigen::Index SvaeModel::context_width() const noexcept {
    return primary_width_ + kRobotFeatureWidth + 3 * (config_.T + 1);
}

nn::AttentionEncoder::Output SvaeModel::encode_full(Tape& tape, Var h_full, Var r_full) const {
    return enc_full_(tape, store_, tape.concat_cols({h_full, r_full}), Var{});
}

nn::AttentionEncoder::Output SvaeModel::encode_lc(Tape& tape, Var h_seen, Var r_seen, Var one_hot,
                                                  Eigen::MatrixXd* attention) const {
    return enc_lc_(tape, store_, tape.concat_cols({h_seen, r_seen}), one_hot, attention);
}

SvaeModel::DecoderOut SvaeModel::decode(Tape& tape, Var z, Var context, const Eigen::MatrixXd* forced_gate) const {
    const Var in = tape.concat_cols({z, context});
    const Var gate = forced_gate ? tape.constant(*forced_gate) : tape.softmax_rows(gating_(tape, store_, in));
    if (tape.value(gate).cols() != config_.num_experts) throw ValidationError("decode: gate width mismatch");
    Var mix{};
    for (int k = 0; k < config_.num_experts; ++k) {
        const Var term = tape.mul_col(experts_[static_cast<std::size_t>(k)](tape, store_, in), tape.slice_cols(gate, k, 1));
        mix = k == 0 ? term : tape.add(mix, term);
    }
    // Every expert predicts relative to the current end-effector position;
    // the gate sums to one, so the output stays a convex combination.
    const Var base = tape.slice_cols(context, primary_width_, 3);
    return {tape.add(mix, base), gate};
}

namespace {

void check_window(const Eigen::MatrixXd& h, const Eigen::MatrixXd& r, Eigen::Index rows, Eigen::Index width,
                  const char* what) {
    if (h.rows() != rows || r.rows() != rows || h.cols() != width || r.cols() != kRobotFeatureWidth)
        throw ValidationError(std::string(what) + ": expected " + std::to_string(rows) + " frames of width " +
                              std::to_string(width) + " (primary) and " + std::to_string(kRobotFeatureWidth) +
                              " (robot), got " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()) + " and " +
                              std::to_string(r.rows()) + "x" + std::to_string(r.cols()));
}

Matrix one_hot_row(HandoverState s) {
    Matrix m(1, kNumHandoverStates);
    const auto oh = one_hot(s);
    for (int i = 0; i < kNumHandoverStates; ++i) m(0, i) = oh[static_cast<std::size_t>(i)];
    return m;
}

LatentDistribution to_latent(const Tape& tape, const nn::AttentionEncoder::Output& o, Eigen::Index row = 0) {
    LatentDistribution q;
    q.mu = tape.value(o.mu).row(row).transpose();
    q.log_var = tape.value(o.log_var).row(row).transpose();
    return q;
}

}  // namespace

LatentDistribution SvaeModel::encode_full(const Eigen::MatrixXd& h_full, const Eigen::MatrixXd& r_full) const {
    check_window(h_full, r_full, 2 * config_.T + 1, primary_width_, "encode_full");
    Tape tape;
    const auto o = encode_full(tape, tape.constant(h_full), tape.constant(r_full));
    return to_latent(tape, o);
}

LatentDistribution SvaeModel::encode_lc(const Eigen::MatrixXd& h_seen, const Eigen::MatrixXd& r_seen,
                                        HandoverState state, Eigen::MatrixXd* attention) const {
    check_window(h_seen, r_seen, config_.T + 1, primary_width_, "encode_lc");
    Tape tape;
    const auto o = encode_lc(tape, tape.constant(h_seen), tape.constant(r_seen), tape.constant(one_hot_row(state)),
                             attention);
    return to_latent(tape, o);
}

Vec3 SvaeModel::decode_with_gate(const Eigen::VectorXd& z, const Eigen::MatrixXd& h_seen,
                                 const Eigen::MatrixXd& r_seen, const Eigen::VectorXd& gate) const {
    if (gate.size() != config_.num_experts) throw ValidationError("decode_with_gate: gate size mismatch");
    Matrix g = gate.transpose();
    if (z.size() != config_.latent_dim) throw ValidationError("decode: latent size mismatch");
    check_window(h_seen, r_seen, config_.T + 1, primary_width_, "decode");
    Tape tape;
    const auto out = decode(tape, tape.constant(z.transpose()), tape.constant(decoder_context(h_seen, r_seen)), &g);
    Vec3 p = tape.value(out.position).row(0).transpose();
    if (!p.allFinite()) throw NumericError("decode produced a non-finite position");
    return p;
}

Vec3 SvaeModel::decode(const Eigen::VectorXd& z, const Eigen::MatrixXd& h_seen, const Eigen::MatrixXd& r_seen) const {
    if (z.size() != config_.latent_dim) throw ValidationError("decode: latent size mismatch");
    check_window(h_seen, r_seen, config_.T + 1, primary_width_, "decode");
    Tape tape;
    const auto out = decode(tape, tape.constant(z.transpose()), tape.constant(decoder_context(h_seen, r_seen)));
    Vec3 p = tape.value(out.position).row(0).transpose();
    if (!p.allFinite()) throw NumericError("decode produced a non-finite position; parameters may be corrupt");
    return p;
}

Eigen::VectorXd SvaeModel::gate(const Eigen::VectorXd& z, const Eigen::MatrixXd& h_seen,
                                const Eigen::MatrixXd& r_seen) const {
    check_window(h_seen, r_seen, config_.T + 1, primary_width_, "gate");
    Tape tape;
    const auto out = decode(tape, tape.constant(z.transpose()), tape.constant(decoder_context(h_seen, r_seen)));
    return tape.value(out.gate).row(0).transpose();
}

Eigen::MatrixXd SvaeModel::expert_outputs(const Eigen::VectorXd& z, const Eigen::MatrixXd& h_seen,
                                          const Eigen::MatrixXd& r_seen) const {
    Eigen::MatrixXd out(3, config_.num_experts);
    for (int k = 0; k < config_.num_experts; ++k) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(config_.num_experts);
        g(k) = 1.0;
        out.col(k) = decode_with_gate(z, h_seen, r_seen, g);
    }
    return out;
}

// ---------------------------------------------------------------- losses

double kl_standard_normal(const LatentDistribution& q) {
    return 0.5 * (q.mu.array().square() + q.log_var.array().exp() - 1.0 - q.log_var.array()).sum();
}

double kl_divergence(const LatentDistribution& p, const LatentDistribution& q) {
    if (p.mu.size() != q.mu.size()) throw ValidationError("kl_divergence: dimension mismatch");
    return 0.5 * (q.log_var.array() - p.log_var.array() +
                  (p.log_var.array().exp() + (p.mu - q.mu).array().square()) / q.log_var.array().exp() - 1.0)
                     .sum();
}

Eigen::VectorXd sample_latent(const LatentDistribution& q, Rng& rng) {
    Eigen::VectorXd z(q.mu.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = q.mu(i) + std::exp(0.5 * q.log_var(i)) * standard_normal(rng);
    return z;
}

namespace {

// Stacked encoder inputs for a batch of windows.
struct WindowBatch {
    Matrix h_full, r_full, h_seen, r_seen, one_hot, context, target;
};

WindowBatch gather(const SvaeModel& model, const std::vector<const MotionWindow*>& windows) {
    const int T = model.config().T;
    const auto B = static_cast<Eigen::Index>(windows.size());
    const Eigen::Index Lf = 2 * T + 1, Ls = T + 1, Fp = model.primary_width();
    WindowBatch b;
    b.h_full.resize(B * Lf, Fp);
    b.r_full.resize(B * Lf, kRobotFeatureWidth);
    b.h_seen.resize(B * Ls, Fp);
    b.r_seen.resize(B * Ls, kRobotFeatureWidth);
    b.one_hot.resize(B, kNumHandoverStates);
    b.context.resize(B, model.context_width());
    b.target.resize(B, 3);
    for (Eigen::Index i = 0; i < B; ++i) {
        const MotionWindow& w = *windows[static_cast<std::size_t>(i)];
        if (w.T != T || w.features->primary.cols() != Fp) throw ValidationError("elbo: window does not match model");
        b.h_full.middleRows(i * Lf, Lf) = w.h_full();
        b.r_full.middleRows(i * Lf, Lf) = w.r_full();
        b.h_seen.middleRows(i * Ls, Ls) = w.h_seen();
        b.r_seen.middleRows(i * Ls, Ls) = w.r_seen();
        b.one_hot.row(i) = one_hot_row(w.state);
        b.context.row(i) = decoder_context(w.h_seen(), w.r_seen());
        b.target.row(i) = w.target_next_ee.transpose();
    }
    return b;
}

struct StepGraph {
    Var recon;  // 1x1 batch mean of squared l2
    Var kl;     // 1x1 batch mean
    Var prediction;
};

StepGraph step_graph(Tape& tape, const SvaeModel& model, const Matrix& h_full, const Matrix& r_full,
                     const Matrix& h_seen, const Matrix& r_seen, const Matrix& one_hot, const Matrix& context,
                     const Matrix& target, SvaeStage stage, const Matrix* eps, bool need_recon) {
    const auto B = static_cast<double>(target.rows());
    StepGraph g;
    Var mu, log_var;
    const auto full = model.encode_full(tape, tape.constant(h_full), tape.constant(r_full));
    if (stage == SvaeStage::FullEncoder) {
        mu = full.mu;
        log_var = full.log_var;
        g.kl = nn::kl_standard_normal(tape, mu, log_var);
    } else {
        const auto lc = model.encode_lc(tape, tape.constant(h_seen), tape.constant(r_seen), tape.constant(one_hot));
        mu = lc.mu;
        log_var = lc.log_var;
        g.kl = nn::kl_gaussians(tape, tape.detach(full.mu), tape.detach(full.log_var), mu, log_var);
    }
    if (need_recon) {
        const Var z = eps ? nn::gaussian_sample(tape, mu, log_var, *eps) : mu;
        const auto dec = model.decode(tape, z, tape.constant(context));
        g.prediction = dec.position;
        g.recon = tape.scale(tape.sum(tape.square(tape.sub(dec.position, tape.constant(target)))), 1.0 / B);
    }
    return g;
}

}  // namespace

Var elbo_graph(Tape& tape, const SvaeModel& model, const std::vector<const MotionWindow*>& windows, double beta,
               SvaeStage stage, const Eigen::MatrixXd* eps, ElboTerms* terms) {
    if (windows.empty()) throw ValidationError("elbo: empty batch");
    const WindowBatch b = gather(model, windows);
    const auto g = step_graph(tape, model, b.h_full, b.r_full, b.h_seen, b.r_seen, b.one_hot, b.context, b.target,
                              stage, eps, true);
    const Var loss = beta == 0.0 ? g.recon : tape.add(g.recon, tape.scale(g.kl, beta));
    if (terms) {
        terms->recon = tape.value(g.recon)(0, 0);
        terms->kl = tape.value(g.kl)(0, 0);
        terms->loss = tape.value(loss)(0, 0);
    }
    return loss;
}

ElboTerms elbo_loss(const SvaeModel& model, const MotionWindow& window, double beta, SvaeStage stage,
                    const Eigen::VectorXd* eps) {
    Tape tape;
    ElboTerms t;
    Matrix e;
    if (eps) {
        if (eps->size() != model.config().latent_dim) throw ValidationError("elbo: eps size mismatch");
        e = eps->transpose();
    }
    elbo_graph(tape, model, {&window}, beta, stage, eps ? &e : nullptr, &t);
    return t;
}

// ---------------------------------------------------------------- training

namespace {

struct Chunk {
    std::size_t clip = 0;
    int start = 0;  // first window centre
};

struct TrainData {
    std::vector<std::shared_ptr<const ClipFeatures>> clips;
    std::vector<Chunk> chunks;
};

TrainData prepare(const Corpus& corpus, const SvaeConfig& cfg) {
    TrainData d;
    const int T = cfg.T;
    const int l = cfg.rollout_len;
    for (const auto& clip : corpus.clips) {
        auto f = clip_features(clip);
        const int len = static_cast<int>(f->frames());
        const std::size_t idx = d.clips.size();
        d.clips.push_back(f);
        for (int c = T; c + l - 1 <= len - T - 2; c += cfg.chunk_stride) d.chunks.push_back({idx, c});
    }
    if (d.chunks.empty()) throw TooShortError("svae: no clip is long enough for a training chunk");
    return d;
}

struct ChunkTotals {
    double recon = 0.0;
    double kl = 0.0;
};

// Runs rollout_len consecutive steps for a batch of chunks on one tape and
// returns the scalar loss. Predictions are fed back (detached) into the
// robot history with probability p; the rotation is then held, as during
// inference.
Var chunk_graph(Tape& tape, const SvaeModel& model, const TrainData& data, const std::vector<Chunk>& batch,
                SvaeStage stage, double p, double recon_weight, double kl_weight, Rng& rng, ChunkTotals& totals) {
    const auto& cfg = model.config();
    const int T = cfg.T;
    const int l = cfg.rollout_len;
    const auto B = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index Lf = 2 * T + 1, Ls = T + 1, Fp = model.primary_width();
    const bool need_recon = recon_weight > 0.0;

    std::vector<Matrix> history(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b)
        history[b] = data.clips[batch[b].clip]->robot.middleRows(batch[b].start - T, Ls);

    Matrix h_full(B * Lf, Fp), r_full(B * Lf, kRobotFeatureWidth), h_seen(B * Ls, Fp),
        r_seen(B * Ls, kRobotFeatureWidth), oh(B, kNumHandoverStates), ctx(B, model.context_width()), target(B, 3);
    Var total{};
    for (int i = 0; i < l; ++i) {
        for (Eigen::Index b = 0; b < B; ++b) {
            const auto& f = *data.clips[batch[static_cast<std::size_t>(b)].clip];
            const int c = batch[static_cast<std::size_t>(b)].start + i;
            h_full.middleRows(b * Lf, Lf) = f.primary.middleRows(c - T, Lf);
            r_full.middleRows(b * Lf, Lf) = f.robot.middleRows(c - T, Lf);
            h_seen.middleRows(b * Ls, Ls) = f.primary.middleRows(c - T, Ls);
            r_seen.middleRows(b * Ls, Ls) = history[static_cast<std::size_t>(b)];
            oh.row(b) = one_hot_row(f.states[static_cast<std::size_t>(c)]);
            ctx.row(b) = decoder_context(h_seen.middleRows(b * Ls, Ls), history[static_cast<std::size_t>(b)]);
            target.row(b) = f.robot.block<1, 3>(c + 1, 0);
        }
        Matrix eps = nn::standard_normal_matrix(B, cfg.latent_dim, rng);
        const auto g = step_graph(tape, model, h_full, r_full, h_seen, r_seen, oh, ctx, target, stage, &eps, need_recon);
        Var step = tape.scale(g.kl, kl_weight);
        totals.kl += tape.value(g.kl)(0, 0) / l;
        if (need_recon) {
            step = tape.add(step, tape.scale(g.recon, recon_weight));
            totals.recon += tape.value(g.recon)(0, 0) / l;
        }
        total = i == 0 ? step : tape.add(total, step);

        for (Eigen::Index b = 0; b < B; ++b) {
            const auto& f = *data.clips[batch[static_cast<std::size_t>(b)].clip];
            const int c = batch[static_cast<std::size_t>(b)].start + i;
            Matrix& h = history[static_cast<std::size_t>(b)];
            Eigen::RowVectorXd next = f.robot.row(c + 1);
            const double u = uniform(rng, 0.0, 1.0);
            if (need_recon && u < p) {
                next.head<3>() = tape.value(g.prediction).row(b);
                next.tail<6>() = h.row(Ls - 1).tail<6>();
            }
            h.topRows(Ls - 1) = h.bottomRows(Ls - 1).eval();
            h.row(Ls - 1) = next;
        }
    }
    return tape.scale(total, 1.0 / l);
}

std::string fmt(double v) { return format_double(v); }

struct EpochRunner {
    SvaeModel& model;
    const TrainData& data;
    nn::Adam& adam;

    SvaeEpochLog run(int stage_no, int epoch, int epochs, double p, double recon_w, double kl_w) {
        const auto& cfg = model.config();
        SvaeEpochLog row;
        row.stage = stage_no;
        row.epoch = epoch;
        row.lr = lr_schedule(epoch, epochs, cfg.lr_start, cfg.lr_end, cfg.lr_decay_start_epoch);
        row.p = p;
        row.recon_in_loss = recon_w > 0.0;
        row.kl_in_loss = kl_w > 0.0;
        const std::string tag = "svae-stage" + std::to_string(stage_no);
        std::vector<std::size_t> order(data.chunks.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(cfg.seed, tag + "-order", static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        Rng noise(derive_seed(cfg.seed, tag + "-noise", static_cast<std::uint64_t>(epoch)));
        const SvaeStage stage = stage_no == 1 ? SvaeStage::FullEncoder : SvaeStage::LatentController;
        ChunkTotals totals;
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<Chunk> batch;
            for (std::size_t k = s; k < std::min(order.size(), s + static_cast<std::size_t>(cfg.batch_size)); ++k)
                batch.push_back(data.chunks[order[k]]);
            Tape tape;
            ChunkTotals t;
            const Var loss = chunk_graph(tape, model, data, batch, stage, p, recon_w, kl_w, noise, t);
            const double lv = tape.value(loss)(0, 0);
            if (!std::isfinite(lv))
                throw NumericError("svae stage " + std::to_string(stage_no) + ": non-finite loss at epoch " +
                                   std::to_string(epoch) + ", batch " + std::to_string(batches));
            model.parameters().zero_grad();
            tape.backward(loss);
            adam.step(model.parameters(), row.lr);
            loss_sum += lv;
            totals.recon += t.recon;
            totals.kl += t.kl;
            ++batches;
        }
        const auto n = static_cast<double>(batches);
        row.loss = loss_sum / n;
        row.recon = totals.recon / n;
        row.kl = totals.kl / n;
        return row;
    }
};

void report(const EpochCallback& progress, const SvaeEpochLog& r) {
    std::ostringstream os;
    os << "svae stage " << r.stage << " epoch " << r.epoch << " lr " << fmt(r.lr) << " p " << fmt(r.p) << " recon "
       << fmt(r.recon) << " kl " << fmt(r.kl) << " loss " << fmt(r.loss);
    if (progress) progress(os.str());
    log_info(os.str());
}

}  // namespace

std::string svae_log_csv(const std::vector<SvaeEpochLog>& log) {
    std::ostringstream os;
    os << "stage,epoch,lr,p,recon,kl,loss\n";
    for (const auto& r : log)
        os << r.stage << ',' << r.epoch << ',' << fmt(r.lr) << ',' << fmt(r.p) << ',' << fmt(r.recon) << ','
           << fmt(r.kl) << ',' << fmt(r.loss) << '\n';
    return os.str();
}

SvaeTrainResult train_stage1(const Corpus& train, const SvaeConfig& config, const EpochCallback& progress) {
    config.validate();
    if (train.clips.empty()) throw ValidationError("svae: empty training corpus");
    const auto width = static_cast<Eigen::Index>(primary_feature_width(train.skeleton->size()));
    SvaeTrainResult result{SvaeModel(config, width), {}};
    const TrainData data = prepare(train, config);
    nn::Adam adam(nn::AdamOptions{.clip_norm = config.clip_norm});
    EpochRunner runner{result.model, data, adam};
    for (int epoch = 0; epoch < config.stage1_epochs; ++epoch) {
        const double p = sched_sampling_p(epoch, config.sched_sampling_ramp_epochs);
        const double kl_w = epoch < config.recon_only_epochs ? 0.0 : config.beta;
        auto row = runner.run(1, epoch, config.stage1_epochs, p, 1.0, kl_w);
        report(progress, row);
        result.log.push_back(row);
    }
    return result;
}

std::vector<SvaeEpochLog> train_stage2(SvaeModel& model, const Corpus& train, const EpochCallback& progress) {
    const auto& config = model.config();
    if (train.clips.empty()) throw ValidationError("svae: empty training corpus");
    const TrainData data = prepare(train, config);
    auto& store = model.parameters();
    store.set_trainable(SvaeModel::kFullEncoderPrefix, false);
    nn::Adam adam(nn::AdamOptions{.clip_norm = config.clip_norm});
    EpochRunner runner{model, data, adam};
    std::vector<SvaeEpochLog> log;
    for (int epoch = 0; epoch < config.stage2_epochs; ++epoch) {
        const bool kl_only = epoch < config.stage2_kl_only_epochs;
        store.set_trainable(SvaeModel::kDecoderPrefix, !kl_only);
        const double p = sched_sampling_p(config.sched_sampling_ramp_epochs, config.sched_sampling_ramp_epochs);
        // KL alone is optimized at unit weight; afterwards recon + beta * KL.
        auto row = runner.run(2, epoch, config.stage2_epochs, p, kl_only ? 0.0 : 1.0, kl_only ? 1.0 : config.beta);
        report(progress, row);
        log.push_back(row);
    }
    store.set_trainable(SvaeModel::kDecoderPrefix, true);
    store.set_trainable(SvaeModel::kFullEncoderPrefix, true);
    return log;
}

double mean_lc_kl(const SvaeModel& model, const std::vector<MotionWindow>& windows) {
    if (windows.empty()) throw ValidationError("mean_lc_kl: no windows");
    double total = 0.0;
    for (std::size_t s = 0; s < windows.size(); s += 256) {
        std::vector<const MotionWindow*> batch;
        for (std::size_t k = s; k < std::min(windows.size(), s + 256); ++k) batch.push_back(&windows[k]);
        const WindowBatch b = gather(model, batch);
        Tape tape;
        const auto full = model.encode_full(tape, tape.constant(b.h_full), tape.constant(b.r_full));
        const auto lc = model.encode_lc(tape, tape.constant(b.h_seen), tape.constant(b.r_seen), tape.constant(b.one_hot));
        total += tape.value(nn::kl_gaussians(tape, full.mu, full.log_var, lc.mu, lc.log_var))(0, 0) *
                 static_cast<double>(batch.size());
    }
    return total / static_cast<double>(windows.size());
}

// ---------------------------------------------------------------- inference

Vec3 generate_next(const SvaeModel& model, const Eigen::MatrixXd& h_seen, const Eigen::MatrixXd& r_seen,
                   HandoverState state, Rng* rng) {
    const auto q = model.encode_lc(h_seen, r_seen, state);
    const Eigen::VectorXd z = rng ? sample_latent(q, *rng) : q.mu;
    return model.decode(z, h_seen, r_seen);
}

std::vector<Vec3> rollout(const SvaeModel& model, const Eigen::MatrixXd& h_stream, const Eigen::MatrixXd& r_init,
                          int steps, const std::vector<HandoverState>& states, const GenerateOptions& options,
                          RolloutTrace* trace) {
    const int T = model.config().T;
    if (steps < 0) throw ValidationError("rollout: negative step count");
    if (steps == 0) return {};
    if (h_stream.rows() < steps + T)
        throw TooShortError("rollout: primary stream has " + std::to_string(h_stream.rows()) + " frames, needs " +
                            std::to_string(steps + T));
    if (r_init.rows() != T + 1 || r_init.cols() != kRobotFeatureWidth)
        throw ValidationError("rollout: initial robot window must be (T+1) x 9");
    if (static_cast<int>(states.size()) < steps) throw TooShortError("rollout: state stream shorter than steps");
    Rng rng(options.seed);
    Eigen::MatrixXd r = r_init;
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) {
        if (trace) trace->r_windows.push_back(r);
        const Eigen::MatrixXd h = h_stream.middleRows(k, T + 1);
        const Vec3 next = generate_next(model, h, r, states[static_cast<std::size_t>(k)],
                                        options.deterministic ? nullptr : &rng);
        out.push_back(next);
        Eigen::RowVectorXd row = r.row(T);
        row.head<3>() = next.transpose();
        r.topRows(T) = r.bottomRows(T).eval();
        r.row(T) = row;
    }
    return out;
}

double mae(const std::vector<std::vector<Vec3>>& generated, const std::vector<std::vector<Vec3>>& ground_truth) {
    if (generated.size() != ground_truth.size()) throw ValidationError("mae: trajectory count mismatch");
    if (generated.empty()) throw ValidationError("mae: no trajectories");
    double total = 0.0;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        const auto& g = generated[i];
        const auto& t = ground_truth[i];
        if (g.size() != t.size()) throw ValidationError("mae: trajectory " + std::to_string(i) + " length mismatch");
        if (g.empty()) throw ValidationError("mae: empty trajectory");
        double s = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) s += (g[k] - t[k]).cwiseAbs().mean();
        total += s / static_cast<double>(g.size());
    }
    return total / static_cast<double>(generated.size());
}

// ---------------------------------------------------------------- evaluation

namespace {

struct Accum {
    std::vector<double> window_errors;
    std::vector<double> trajectory_errors;
};

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {std::nan(""), std::nan("")};
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double sq = 0.0;
    for (double x : v) sq += (x - m) * (x - m);
    return {m, std::sqrt(sq / static_cast<double>(v.size()))};
}

}  // namespace

std::vector<SvaeReportRow> evaluate_svae(const SvaeModel& model, const Corpus& corpus, const SvaeEvalOptions& options) {
    if (corpus.clips.empty()) throw ValidationError("evaluate_svae: empty corpus");
    if (options.window_stride <= 0) throw ValidationError("evaluate_svae: stride must be positive");
    const int T = model.config().T;
    std::array<Accum, kNumActivities> acc;
    for (const auto& clip : corpus.clips) {
        auto feats = clip_features(clip);
        auto& a = acc[static_cast<std::size_t>(clip.activity)];
        // Teacher-forced next-step error, batched.
        const auto windows = make_windows(feats, T, options.window_stride);
        for (std::size_t s = 0; s < windows.size(); s += 256) {
            std::vector<const MotionWindow*> batch;
            for (std::size_t k = s; k < std::min(windows.size(), s + 256); ++k) batch.push_back(&windows[k]);
            const WindowBatch b = gather(model, batch);
            Tape tape;
            const auto lc = model.encode_lc(tape, tape.constant(b.h_seen), tape.constant(b.r_seen),
                                            tape.constant(b.one_hot));
            const auto dec = model.decode(tape, lc.mu, tape.constant(b.context));
            const Matrix err = (tape.value(dec.position) - b.target).cwiseAbs();
            for (Eigen::Index i = 0; i < err.rows(); ++i) a.window_errors.push_back(err.row(i).mean());
        }
        // One autoregressive rollout per handover segment.
        for (const auto& seg : segment_handovers(clip)) {
            const int c0 = static_cast<int>(seg.start) - 1;
            const int steps = static_cast<int>(seg.end - seg.start) + 1;
            if (c0 < T) continue;
            const Eigen::MatrixXd h = feats->primary.middleRows(c0 - T, T + steps);
            const Eigen::MatrixXd r0 = feats->robot.middleRows(c0 - T, T + 1);
            std::vector<HandoverState> states;
            std::vector<Vec3> truth;
            for (int k = 0; k < steps; ++k) {
                states.push_back(feats->states[static_cast<std::size_t>(c0 + k)]);
                truth.push_back(feats->robot.block<1, 3>(c0 + k + 1, 0).transpose());
            }
            const auto gen = rollout(model, h, r0, steps, states);
            a.trajectory_errors.push_back(mae({gen}, {truth}));
        }
    }
    std::vector<SvaeReportRow> rows;
    Accum all;
    auto make_row = [](const std::string& label, const Accum& a) {
        SvaeReportRow r;
        r.label = label;
        r.windows = a.window_errors.size();
        r.trajectories = a.trajectory_errors.size();
        const auto [m, s] = mean_std(a.window_errors);
        const auto [am, as] = mean_std(a.trajectory_errors);
        r.mae_cm = 100.0 * m;
        r.mae_std_cm = 100.0 * s;
        r.ar_mae_cm = 100.0 * am;
        r.ar_mae_std_cm = 100.0 * as;
        return r;
    };
    for (Activity act : all_activities()) {
        const auto& a = acc[static_cast<std::size_t>(act)];
        if (a.window_errors.empty()) continue;
        rows.push_back(make_row(std::string(activity_slug(act)), a));
        all.window_errors.insert(all.window_errors.end(), a.window_errors.begin(), a.window_errors.end());
        all.trajectory_errors.insert(all.trajectory_errors.end(), a.trajectory_errors.begin(),
                                     a.trajectory_errors.end());
    }
    rows.push_back(make_row("overall", all));
    return rows;
}

std::string svae_report_csv(const std::vector<SvaeReportRow>& rows) {
    std::ostringstream os;
    os << "activity,windows,MAE_cm,MAE_std,trajectories,AR_MAE_cm,AR_MAE_std\n";
    for (const auto& r : rows)
        os << r.label << ',' << r.windows << ',' << fmt(r.mae_cm) << ',' << fmt(r.mae_std_cm) << ','
           << r.trajectories << ',' << fmt(r.ar_mae_cm) << ',' << fmt(r.ar_mae_std_cm) << '\n';
    return os.str();
}

Checkpoint svae_checkpoint(const SvaeModel& model, const std::vector<SvaeEpochLog>& log) {
    nlohmann::json cfg;
    cfg["svae"] = model.config();
    cfg["primary_width"] = model.primary_width();
    return make_checkpoint("svae", std::move(cfg), model.parameters(), svae_log_csv(log));
}

SvaeModel svae_from_checkpoint(const Checkpoint& checkpoint) {
    if (checkpoint.model_type != "svae")
        throw ConsistencyError("checkpoint holds a '" + checkpoint.model_type + "' model, expected 'svae'");
    SvaeConfig cfg;
    Eigen::Index width = 0;
    try {
        cfg = checkpoint.config.at("svae").get<SvaeConfig>();
        width = checkpoint.config.at("primary_width").get<Eigen::Index>();
    } catch (const nlohmann::json::exception& e) {
        throw ConsistencyError(std::string("svae checkpoint config: ") + e.what());
    }
    SvaeModel model(cfg, width);
    restore_parameters(checkpoint, model.parameters());
    return model;
}

}  // namespace handover
