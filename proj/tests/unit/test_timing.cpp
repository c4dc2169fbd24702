#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "handover/error.hpp"
#include "handover/timing.hpp"

using namespace handover;

namespace {

// Blocks of ten frames alternate between positive and negative first
// feature; the label is the sign at the window's last frame.
std::vector<TimingSample> separable_samples(int T, Rng& rng) {
    auto f = std::make_shared<ClipFeatures>();
    const int frames = 200, width = 3;
    f->primary.resize(frames, width);
    f->robot = Eigen::MatrixXd::Zero(frames, kRobotFeatureWidth);
    for (int t = 0; t < frames; ++t) {
        const bool on = (t / 10) % 2 == 1;
        f->primary(t, 0) = (on ? 1.0 : -1.0) + 0.1 * standard_normal(rng);
        f->primary(t, 1) = standard_normal(rng);
        f->primary(t, 2) = standard_normal(rng);
        f->states.push_back(on ? HandoverState::HandingOver : HandoverState::Idle);
    }
    std::vector<TimingSample> out;
    for (int c = T; c < frames; ++c) {
        MotionWindow w;
        w.features = f;
        w.center = c;
        w.T = T;
        w.state = f->states[static_cast<std::size_t>(c)];
        out.push_back({w, w.state != HandoverState::Idle ? 1 : 0, Activity::MountMic});
    }
    return out;
}

Eigen::MatrixXd past_of(const MotionWindow& w) { return w.features->primary.middleRows(w.center - w.T, w.T + 1); }

// A clip ending halfway through its handover: one idle and one handover
// segment.
MotionClip half_handover_clip(std::uint64_t seed) {
    MotionClip clip = fixture::tiny_corpus(1, seed).clips.front();
    const auto seg = segment_handovers(clip).front();
    const std::size_t keep = (seg.start + seg.end) / 2;
    clip.frames.resize(keep);
    clip.annotations.resize(keep);
    return clip;
}

}  // namespace

TEST_SUITE("timing") {
    TEST_CASE("threshold is strict at 0.6") {
        CHECK(classify(0.61));
        CHECK_FALSE(classify(0.60));
        CHECK_FALSE(classify(0.0));
        CHECK(classify(1.0));
        CHECK_THROWS(classify(1.5));
        CHECK_THROWS(classify(-0.1));
        CHECK_THROWS(classify(std::nan("")));
        bool prev = false;
        for (int k = 0; k <= 100; ++k) {
            const bool now = classify(k / 100.0);
            CHECK((!prev || now));
            prev = now;
        }
    }

    TEST_CASE("binary cross-entropy values") {
        CHECK(bce_loss({0.5, 0.5, 0.5}, {1, 0, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(bce_loss({std::exp(-1.0)}, {1}) == doctest::Approx(1.0).epsilon(1e-12));
        const double exact = bce_loss({1.0, 0.0}, {1, 0});
        CHECK(exact >= 0.0);
        CHECK(exact < 1e-6);
        CHECK(std::isfinite(bce_loss({0.0}, {1})));
        CHECK(bce_loss({0.0}, {1}) == doctest::Approx(-std::log(kBceEpsilon)));
        CHECK_THROWS(bce_loss({0.5}, {2}));
        CHECK_THROWS(bce_loss({0.5, 0.5}, {1}));
    }

    TEST_CASE("likelihood is bounded and deterministic") {
        const TimingConfig cfg = fixture::tiny_timing();
        const TimingModel model(cfg, 3 * (cfg.T + 1));
        Rng rng(2);
        for (int i = 0; i < 50; ++i) {
            Eigen::MatrixXd h(cfg.T + 1, 3);
            for (Eigen::Index k = 0; k < h.size(); ++k) h.data()[k] = 20.0 * standard_normal(rng);
            const double p = predict_likelihood(model, h);
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            CHECK(p == predict_likelihood(model, h));
        }
        CHECK_THROWS(predict_likelihood(model, Eigen::MatrixXd::Zero(cfg.T, 3)));
        const Eigen::MatrixXd m{{1, 2}, {3, 4}};
        CHECK(flatten_window(m) == Eigen::RowVector4d(1, 2, 3, 4));
    }

    TEST_CASE("network gradients match finite differences") {
        TimingConfig cfg = fixture::tiny_timing();
        TimingModel model(cfg, 4);
        Rng rng(7);
        Eigen::MatrixXd x(6, 4);
        for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = standard_normal(rng);
        const std::vector<int> y{1, 0, 0, 1, 1, 0};
        auto predictions = [&](nn::Tape& tape) { return model.graph(tape, tape.constant(x)); };
        auto analytic = [&] {
            nn::Tape tape;
            const nn::Var p = predictions(tape);
            const Eigen::MatrixXd v = tape.value(p);
            Eigen::MatrixXd g(v.rows(), 1);
            for (Eigen::Index i = 0; i < v.rows(); ++i)
                g(i, 0) = (v(i, 0) - y[static_cast<std::size_t>(i)]) / (v(i, 0) * (1.0 - v(i, 0))) /
                          static_cast<double>(v.rows());
            tape.backward(p, g);
        };
        auto value = [&] {
            nn::Tape tape;
            const Eigen::MatrixXd v = tape.value(predictions(tape));
            return bce_loss(std::vector<double>(v.data(), v.data() + v.size()), y);
        };
        const auto r = gradcheck::check_parameters(model.parameters(), analytic, value, 20, 1e-4, 1e-10);
        CHECK(r.ok);
        CHECK(r.checked > 40);
    }

    TEST_CASE("separable fixture is learned") {
        Rng rng(3);
        TimingConfig cfg = fixture::tiny_timing();
        cfg.hidden_dim = 16;
        cfg.epochs = 60;
        cfg.lr_start = 3e-3;
        cfg.lr_end = 1e-4;
        cfg.lr_decay_start_epoch = 30;
        cfg.batch_size = 16;
        const auto samples = separable_samples(cfg.T, rng);
        const auto result = train_timing(samples, 3 * (cfg.T + 1), cfg);
        REQUIRE(result.log.size() == 60);
        CHECK(result.log.back().loss < result.log.front().loss);
        std::size_t ok = 0;
        for (const auto& s : samples)
            ok += static_cast<std::size_t>(classify(predict_likelihood(result.model, past_of(s.window))) == (s.label == 1));
        CHECK(static_cast<double>(ok) / static_cast<double>(samples.size()) >= 0.95);
        std::size_t confident = 0, positives = 0;
        for (const auto& s : samples)
            if (s.label == 1) {
                ++positives;
                confident += static_cast<std::size_t>(predict_likelihood(result.model, past_of(s.window)) > 0.9);
            }
        CHECK(static_cast<double>(confident) / static_cast<double>(positives) >= 0.9);

        const auto again = train_timing(samples, 3 * (cfg.T + 1), cfg);
        for (std::size_t e = 0; e < result.log.size(); ++e) CHECK(result.log[e].loss == again.log[e].loss);
        CHECK(result.model.parameters().hash() == again.model.parameters().hash());
    }

    TEST_CASE("window labels follow the last seen frame") {
        const Corpus corpus = fixture::tiny_corpus(2, 31);
        TimingConfig cfg = fixture::tiny_timing();
        cfg.window_stride = 1;
        const auto samples = timing_samples(corpus, cfg);
        REQUIRE(!samples.empty());
        int positives = 0;
        for (const auto& s : samples) {
            const auto st = s.window.features->states[static_cast<std::size_t>(s.window.center)];
            CHECK(s.label == (st != HandoverState::Idle ? 1 : 0));
            positives += s.label;
        }
        CHECK(positives > 0);
        CHECK(positives < static_cast<int>(samples.size()));
    }

    TEST_CASE("accuracy report layout and counting") {
        Corpus corpus = fixture::tiny_corpus(3, 32);
        HandoverPredictor perfect = [](const ClipFeatures& f, const std::vector<int>& centers) {
            std::vector<bool> out;
            for (int c : centers) out.push_back(f.states[static_cast<std::size_t>(c)] != HandoverState::Idle);
            return out;
        };
        HandoverPredictor never = [](const ClipFeatures&, const std::vector<int>& centers) {
            return std::vector<bool>(centers.size(), false);
        };
        const auto rows = accuracy_report(perfect, corpus, {4, 1});
        REQUIRE(rows.size() == 21);
        int activity_rows = 0;
        for (const auto& r : rows) activity_rows += r.group == "activity";
        CHECK(activity_rows == kNumActivities);
        CHECK(rows.back().group == "overall");
        for (const auto& r : rows)
            if (r.segments > 0) {
                CHECK(r.segment_accuracy == 100.0);
                CHECK(r.window_accuracy == 100.0);
            }
        CHECK(rows.back().segments == 9);

        Corpus half;
        half.skeleton = corpus.skeleton;
        half.clips = {half_handover_clip(33), half_handover_clip(34)};
        const auto constant = accuracy_report(never, half, {4, 1});
        CHECK(constant.back().segments == 4);
        CHECK(constant.back().segment_accuracy == doctest::Approx(50.0));
        CHECK(accuracy_report_csv(rows).rfind("group,label,segments,segment_accuracy,windows,window_accuracy\n", 0) == 0);
        CHECK_THROWS(accuracy_report(perfect, Corpus{}, {4, 1}));
    }

    TEST_CASE("checkpoint round trip") {
        const Corpus corpus = fixture::tiny_corpus(2, 35);
        const TimingConfig cfg = fixture::tiny_timing();
        const auto trained = train_timing(corpus, cfg);
        REQUIRE(trained.log.size() == static_cast<std::size_t>(cfg.epochs));
        const TimingModel restored = timing_from_checkpoint(timing_checkpoint(trained.model, trained.log));
        const auto samples = timing_samples(corpus, cfg);
        for (std::size_t i = 0; i < samples.size(); i += 17) {
            const auto h = past_of(samples[i].window);
            CHECK(std::abs(predict_likelihood(trained.model, h) - predict_likelihood(restored, h)) < 1e-9);
        }
    }
}
