#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "handover/error.hpp"
#include "handover/schedule.hpp"
#include "handover/svae.hpp"
#include "oracles.hpp"

using namespace handover;

namespace {

struct TinySetup {
    Corpus corpus = fixture::tiny_corpus(2, 21);
    SvaeConfig config = fixture::tiny_svae();
    SvaeModel model{config, static_cast<Eigen::Index>(primary_feature_width(corpus.skeleton->size()))};
    std::vector<MotionWindow> windows = make_windows(corpus.clips[0], config.T, 23);
};

TinySetup& tiny() {
    static TinySetup s;
    return s;
}

Eigen::MatrixXd copy_of(const auto& block) { return Eigen::MatrixXd(block); }

}  // namespace

TEST_SUITE("svae") {
    TEST_CASE("encoders are deterministic with the configured shapes") {
        auto& s = tiny();
        const auto& w = s.windows.at(2);
        const auto a = s.model.encode_full(copy_of(w.h_full()), copy_of(w.r_full()));
        const auto b = s.model.encode_full(copy_of(w.h_full()), copy_of(w.r_full()));
        CHECK(a.mu.size() == s.config.latent_dim);
        CHECK(a.log_var.size() == s.config.latent_dim);
        CHECK(a.mu == b.mu);
        CHECK(a.log_var == b.log_var);
        CHECK_THROWS(s.model.encode_full(copy_of(w.h_seen()), copy_of(w.r_full())));
    }

    TEST_CASE("latent controller attention and state conditioning") {
        auto& s = tiny();
        const auto& w = s.windows.at(1);
        Eigen::MatrixXd att;
        const auto q = s.model.encode_lc(copy_of(w.h_seen()), copy_of(w.r_seen()), HandoverState::Idle, &att);
        REQUIRE(att.rows() == s.config.attention_heads);
        REQUIRE(att.cols() == s.config.T + 1);
        CHECK(att.minCoeff() >= 0.0);
        for (Eigen::Index r = 0; r < att.rows(); ++r) CHECK(std::abs(att.row(r).sum() - 1.0) < 1e-6);
        const auto h = s.model.encode_lc(copy_of(w.h_seen()), copy_of(w.r_seen()), HandoverState::HandingOver);
        CHECK((q.mu - h.mu).norm() > 0.0);
    }

    TEST_CASE("decoder is a convex combination of experts") {
        auto& s = tiny();
        Rng rng(2);
        for (const auto& w : s.windows) {
            const Eigen::VectorXd z = nn::standard_normal_matrix(s.config.latent_dim, 1, rng);
            const auto hs = copy_of(w.h_seen());
            const auto rs = copy_of(w.r_seen());
            const Vec3 y = s.model.decode(z, hs, rs);
            const Eigen::MatrixXd e = s.model.expert_outputs(z, hs, rs);
            const Eigen::VectorXd g = s.model.gate(z, hs, rs);
            CHECK(g.minCoeff() >= 0.0);
            CHECK(std::abs(g.sum() - 1.0) < 1e-6);
            for (int k = 0; k < 3; ++k) {
                CHECK(y(k) >= e.row(k).minCoeff() - 1e-12);
                CHECK(y(k) <= e.row(k).maxCoeff() + 1e-12);
            }
            CHECK((y - e * g).norm() < 1e-12);
            for (int k = 0; k < s.config.num_experts; ++k) {
                const Eigen::VectorXd one = Eigen::VectorXd::Unit(s.config.num_experts, k);
                CHECK((s.model.decode_with_gate(z, hs, rs, one) - e.col(k)).norm() < 1e-12);
            }
        }
    }

    TEST_CASE("ELBO terms") {
        auto& s = tiny();
        const auto& w = s.windows.at(0);
        const auto t0 = elbo_loss(s.model, w, 0.0);
        CHECK(t0.loss == t0.recon);
        const auto t1 = elbo_loss(s.model, w, 0.1);
        CHECK(t1.loss == doctest::Approx(t1.recon + 0.1 * t1.kl).epsilon(1e-12));
        const auto q = s.model.encode_full(copy_of(w.h_full()), copy_of(w.r_full()));
        CHECK(t1.kl == doctest::Approx(oracle::kl_diag_standard(q.mu, q.log_var)).epsilon(1e-12));
        const Vec3 pred = s.model.decode(q.mu, copy_of(w.h_seen()), copy_of(w.r_seen()));
        CHECK(t1.recon == doctest::Approx((pred - w.target_next_ee).squaredNorm()).epsilon(1e-12));

        LatentDistribution z{Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4)};
        CHECK(kl_standard_normal(z) == 0.0);
        z.mu(0) = 1.0;
        CHECK(std::abs(kl_standard_normal(z) - 0.5) < 1e-9);
        CHECK(kl_divergence(z, z) == 0.0);
    }

    TEST_CASE("ELBO parameter gradients match finite differences") {
        auto& s = tiny();
        std::vector<const MotionWindow*> batch{&s.windows[0], &s.windows[3], &s.windows[5]};
        Rng rng(8);
        const Eigen::MatrixXd eps = nn::standard_normal_matrix(3, s.config.latent_dim, rng);
        for (SvaeStage stage : {SvaeStage::FullEncoder, SvaeStage::LatentController}) {
            CAPTURE(static_cast<int>(stage));
            auto analytic = [&] {
                nn::Tape tape;
                tape.backward(elbo_graph(tape, s.model, batch, 0.1, stage, &eps));
            };
            auto value = [&] {
                nn::Tape tape;
                return tape.value(elbo_graph(tape, s.model, batch, 0.1, stage, &eps))(0, 0);
            };
            // Stage 2 treats the full-window posterior as a fixed target.
            s.model.parameters().set_trainable(SvaeModel::kFullEncoderPrefix, stage == SvaeStage::FullEncoder);
            const auto r = gradcheck::check_parameters(s.model.parameters(), analytic, value, 6, 1e-3, 1e-9);
            s.model.parameters().set_trainable(SvaeModel::kFullEncoderPrefix, true);
            CHECK(r.ok);
            CHECK(r.checked > 50);
        }
    }

    TEST_CASE("reparameterized samples have the requested variance") {
        LatentDistribution q{Eigen::Vector2d(0.3, -1.0), Eigen::Vector2d(std::log(0.25), std::log(2.0))};
        Rng rng(6);
        Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd z = sample_latent(q, rng);
            sum += z;
            sq += z.cwiseProduct(z);
        }
        const Eigen::Vector2d mean = sum / n;
        const Eigen::Vector2d var = sq / n - mean.cwiseProduct(mean);
        CHECK(std::abs(var(0) / 0.25 - 1.0) < 0.05);
        CHECK(std::abs(var(1) / 2.0 - 1.0) < 0.05);
    }

    TEST_CASE("schedules") {
        CHECK(sched_sampling_p(0) == 0.0);
        CHECK(sched_sampling_p(25) == 0.5);
        CHECK(sched_sampling_p(50) == 1.0);
        CHECK(sched_sampling_p(120) == 1.0);
        for (int e = 1; e < 60; ++e) CHECK(sched_sampling_p(e) >= sched_sampling_p(e - 1));
        CHECK(lr_schedule(0, 140) == 1e-4);
        CHECK(lr_schedule(49, 140) == 1e-4);
        CHECK(std::abs(lr_schedule(139, 140) / 1e-7 - 1.0) < 0.01);
        for (int e = 51; e < 140; ++e) CHECK(lr_schedule(e, 140) < lr_schedule(e - 1, 140));
        // Geometric: equal ratios between consecutive decay epochs.
        const double r1 = lr_schedule(80, 140) / lr_schedule(79, 140);
        const double r2 = lr_schedule(120, 140) / lr_schedule(119, 140);
        CHECK(r1 == doctest::Approx(r2).epsilon(1e-9));
    }

    TEST_CASE("stage 1 log and loss composition") {
        const Corpus corpus = fixture::tiny_corpus(2, 31);
        SvaeConfig cfg = fixture::tiny_svae();
        cfg.stage1_epochs = 5;
        cfg.recon_only_epochs = 3;
        const auto r = train_stage1(corpus, cfg);
        REQUIRE(r.log.size() == 5);
        for (const auto& row : r.log) {
            CHECK(row.stage == 1);
            CHECK(row.kl_in_loss == (row.epoch >= 3));
            CHECK(row.recon_in_loss);
        }
        CHECK(r.model.parameters().all_finite());
    }

    TEST_CASE("stage 1 overfits a small fixture") {
        const Corpus corpus = fixture::tiny_corpus(1, 41);
        SvaeConfig cfg = fixture::tiny_svae();
        cfg.hidden_dim = 16;
        cfg.stage1_epochs = 40;
        cfg.recon_only_epochs = 40;
        cfg.sched_sampling_ramp_epochs = 1000;
        cfg.lr_start = 3e-3;
        cfg.lr_end = 1e-4;
        cfg.lr_decay_start_epoch = 20;
        cfg.batch_size = 4;
        cfg.chunk_stride = 25;
        const auto r = train_stage1(corpus, cfg);
        CHECK(r.log.back().recon < 0.1 * r.log.front().recon);
    }

    TEST_CASE("training is bit-reproducible") {
        const Corpus corpus = fixture::tiny_corpus(2, 51);
        const SvaeConfig cfg = fixture::tiny_svae();
        const auto a = train_stage1(corpus, cfg);
        const auto b = train_stage1(corpus, cfg);
        CHECK(a.model.parameters().hash() == b.model.parameters().hash());
        CHECK(svae_log_csv(a.log) == svae_log_csv(b.log));
    }

    TEST_CASE("stage 2 freezes the full encoder and switches composition") {
        const Corpus corpus = fixture::tiny_corpus(2, 61);
        SvaeConfig cfg = fixture::tiny_svae();
        cfg.stage2_epochs = 6;
        cfg.stage2_kl_only_epochs = 3;
        auto r = train_stage1(corpus, cfg);
        const auto enc = r.model.parameters().hash(SvaeModel::kFullEncoderPrefix);
        const auto held_out = make_windows(fixture::tiny_corpus(1, 62).clips[0], cfg.T, 9);
        const double kl_before = mean_lc_kl(r.model, held_out);
        const auto log = train_stage2(r.model, corpus);
        CHECK(r.model.parameters().hash(SvaeModel::kFullEncoderPrefix) == enc);
        REQUIRE(log.size() == 6);
        for (const auto& row : log) {
            CHECK(row.stage == 2);
            CHECK(row.kl_in_loss);
            CHECK(row.recon_in_loss == (row.epoch >= 3));
        }
        CHECK(mean_lc_kl(r.model, held_out) < kl_before);
    }

    TEST_CASE("generate_next") {
        auto& s = tiny();
        const auto& w = s.windows.at(4);
        const auto hs = copy_of(w.h_seen());
        const auto rs = copy_of(w.r_seen());
        const Vec3 a = generate_next(s.model, hs, rs, HandoverState::HandingOver);
        CHECK(a == generate_next(s.model, hs, rs, HandoverState::HandingOver));
        Rng r1(5), r2(5);
        for (int i = 0; i < 3; ++i)
            CHECK(generate_next(s.model, hs, rs, HandoverState::Idle, &r1) ==
                  generate_next(s.model, hs, rs, HandoverState::Idle, &r2));
        CHECK_THROWS(generate_next(s.model, hs.topRows(3), rs, HandoverState::Idle));
    }

    TEST_CASE("rollout window bookkeeping") {
        auto& s = tiny();
        const auto f = clip_features(s.corpus.clips[0]);
        const int T = s.config.T;
        const int steps = 2 * T + 3;
        const Eigen::MatrixXd h = f->primary.middleRows(10, steps + T);
        const Eigen::MatrixXd r0 = f->robot.middleRows(10, T + 1);
        const std::vector<HandoverState> states(static_cast<std::size_t>(steps), HandoverState::Idle);
        CHECK(rollout(s.model, h, r0, 0, {}).empty());
        RolloutTrace trace;
        const auto traj = rollout(s.model, h, r0, steps, states, {}, &trace);
        REQUIRE(traj.size() == static_cast<std::size_t>(steps));
        REQUIRE(trace.r_windows.size() == static_cast<std::size_t>(steps));
        for (int k = 0; k < steps; ++k) {
            const auto& win = trace.r_windows[static_cast<std::size_t>(k)];
            REQUIRE(win.rows() == T + 1);
            for (int row = 0; row <= T; ++row) {
                const int gen = k - (T + 1) + row;  // generated index held by this row
                if (gen >= 0)
                    CHECK((win.row(row).head<3>().transpose() - traj[static_cast<std::size_t>(gen)]).norm() == 0.0);
                else
                    CHECK(win.row(row) == r0.row(row + k));
                CHECK(win.row(row).tail<6>() == (gen >= 0 ? r0.row(T).tail<6>() : r0.row(row + k).tail<6>()));
            }
        }
        CHECK_THROWS_AS(rollout(s.model, h.topRows(steps + T - 1), r0, steps, states), TooShortError);
    }

    TEST_CASE("a copy model rolls out a constant trajectory") {
        auto& s = tiny();
        SvaeModel copy = s.model;
        for (auto& p : copy.parameters().all()) {
            const bool expert_out = p.name.find("decoder.expert") == 0 && p.name.find(".2.") != std::string::npos;
            if (expert_out) p.value.setZero();
        }
        const int T = s.config.T;
        const Eigen::MatrixXd h = copy_of(s.windows[0].h_seen()).topRows(1).replicate(25 + T, 1);
        const Eigen::MatrixXd r0 = copy_of(s.windows[0].r_seen()).topRows(1).replicate(T + 1, 1);
        const auto traj = rollout(copy, h, r0, 25, std::vector<HandoverState>(25, HandoverState::Idle));
        for (const auto& p : traj) CHECK((p - r0.row(0).head<3>().transpose()).norm() < 1e-3);
    }

    TEST_CASE("mae") {
        std::vector<Vec3> a{Vec3(0, 0, 0), Vec3(1, 1, 1)};
        std::vector<Vec3> b{Vec3(0.01, 0.01, 0.01), Vec3(1.01, 1.01, 1.01)};
        CHECK(mae({a}, {a}) == 0.0);
        CHECK(mae({b}, {a}) == doctest::Approx(0.01).epsilon(1e-12));
        std::vector<Vec3> c{Vec3(0.3, 0, 0)};
        std::vector<Vec3> d{Vec3(0, 0, 0)};
        const double ma = 0.01, mb = 0.1;
        CHECK(mae({b, c}, {a, d}) == doctest::Approx((ma + mb) / 2).epsilon(1e-12));
        CHECK_THROWS(mae({a}, {c}));
    }

    TEST_CASE("checkpoint round trip") {
        auto& s = tiny();
        const auto path = std::filesystem::temp_directory_path() / "handover_unit_svae.ckpt";
        write_checkpoint(path, svae_checkpoint(s.model, {}));
        const SvaeModel back = svae_from_checkpoint(read_checkpoint(path));
        const auto& w = s.windows[1];
        const Vec3 a = generate_next(s.model, copy_of(w.h_seen()), copy_of(w.r_seen()), HandoverState::Idle);
        const Vec3 b = generate_next(back, copy_of(w.h_seen()), copy_of(w.r_seen()), HandoverState::Idle);
        CHECK((a - b).norm() < 1e-5);
        std::filesystem::remove(path);
    }
}
