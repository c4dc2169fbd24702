#include <benchmark/benchmark.h>

#include "handover/controller.hpp"
#include "handover/dataio.hpp"
#include "handover/kinematics.hpp"
#include "handover/rng.hpp"
#include "handover/svae.hpp"
#include "handover/timing.hpp"

using namespace handover;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = standard_normal(rng);
    return m;
}

}  // namespace

static void BM_ForwardKinematics(benchmark::State& state) {
    const Skeleton skel = Skeleton::synthetic_body();
    Pose pose = Pose::rest(skel);
    Rng rng(1);
    for (auto& a : pose.joint_angles) a = Vec3(0.2 * standard_normal(rng), 0.2 * standard_normal(rng), 0.0);
    for (auto _ : state) benchmark::DoNotOptimize(forward_kinematics_full(skel, pose));
}
BENCHMARK(BM_ForwardKinematics);

static void BM_SixDRoundTrip(benchmark::State& state) {
    const Mat3 r = euler_to_matrix({Axis::Z, Axis::X, Axis::Y}, Vec3(0.3, -1.1, 2.0));
    for (auto _ : state) benchmark::DoNotOptimize(sixd_to_matrix(matrix_to_6d(r)));
}
BENCHMARK(BM_SixDRoundTrip);

static void BM_TimingLikelihood(benchmark::State& state) {
    const TimingConfig cfg;
    const auto width = static_cast<Eigen::Index>(primary_feature_width(Skeleton::synthetic_body().size()));
    const TimingModel model(cfg, width * (cfg.T + 1));
    const Eigen::MatrixXd h = random_matrix(cfg.T + 1, width, 2);
    for (auto _ : state) benchmark::DoNotOptimize(predict_likelihood(model, h));
}
BENCHMARK(BM_TimingLikelihood)->Unit(benchmark::kMicrosecond);

static void BM_SvaeGenerateNext(benchmark::State& state) {
    const SvaeConfig cfg;
    const auto width = static_cast<Eigen::Index>(primary_feature_width(Skeleton::synthetic_body().size()));
    const SvaeModel model(cfg, width);
    const Eigen::MatrixXd h = random_matrix(cfg.T + 1, width, 3);
    const Eigen::MatrixXd r = random_matrix(cfg.T + 1, kRobotFeatureWidth, 4);
    for (auto _ : state) benchmark::DoNotOptimize(generate_next(model, h, r, HandoverState::HandingOver));
}
BENCHMARK(BM_SvaeGenerateNext)->Unit(benchmark::kMicrosecond);

static void BM_KalmanStep(benchmark::State& state) {
    const KalmanConfig cfg;
    KalmanState s = kalman_init(Vec3::Zero(), cfg);
    const Vec3 z(0.3, 0.2, 0.1);
    for (auto _ : state) {
        s = kalman_step(s, z, cfg, 0.04).state;
        benchmark::DoNotOptimize(s);
    }
}
BENCHMARK(BM_KalmanStep);
BENCHMARK_MAIN();
