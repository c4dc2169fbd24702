#include <doctest.h>

#include "gradcheck.hpp"
#include "handover/nn.hpp"

using namespace handover;
using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) { return nn::standard_normal_matrix(r, c, rng); }

// Builds a scalar from parameters a (3x4), b (4x2) and row (1x2) through
// the op under test; returns the loss node.
using Build = std::function<Var(Tape&, Var a, Var b, Var row)>;

void check_op(const char* name, const Build& build) {
    CAPTURE(name);
    Rng rng(5);
    nn::ParameterStore store;
    const auto ia = store.add("a", random_matrix(3, 4, rng));
    const auto ib = store.add("b", random_matrix(4, 2, rng));
    const auto ir = store.add("row", random_matrix(1, 2, rng));
    auto eval = [&](bool backward) {
        Tape tape;
        const Var out = build(tape, tape.param(store, ia), tape.param(store, ib), tape.param(store, ir));
        if (backward) tape.backward(out);
        return tape.value(out)(0, 0);
    };
    const auto r = gradcheck::check_parameters(
        store, [&] { eval(true); }, [&] { return eval(false); }, 12, 1e-6, 1e-9);
    CHECK(r.ok);
    CHECK(r.checked > 0);
}

}  // namespace

TEST_SUITE("nn") {
    TEST_CASE("op gradients match finite differences") {
        check_op("matmul+sum", [](Tape& t, Var a, Var b, Var) { return t.sum(t.square(t.matmul(a, b))); });
        check_op("add_row+elu", [](Tape& t, Var a, Var b, Var r) { return t.sum(t.elu(t.add_row(t.matmul(a, b), r))); });
        check_op("tanh/sigmoid/exp", [](Tape& t, Var a, Var b, Var) {
            const Var m = t.matmul(a, b);
            return t.mean(t.add(t.mul(t.tanh(m), t.sigmoid(m)), t.exp(t.scale(m, 0.3))));
        });
        check_op("softmax_rows", [](Tape& t, Var a, Var b, Var r) {
            const Var s = t.softmax_rows(t.matmul(a, b));
            return t.sum(t.mul(s, t.add_row(s, r)));
        });
        check_op("concat/slice", [](Tape& t, Var a, Var b, Var r) {
            const Var c = t.concat_cols({t.matmul(a, b), a});
            const Var s = t.slice_cols(c, 1, 4);
            const Var rows = t.slice_rows(s, 1, 2);
            return t.add(t.sum(t.square(rows)), t.sum(t.mul(r, r)));
        });
        check_op("flatten/row_sum/mul_col", [](Tape& t, Var a, Var b, Var) {
            const Var m = t.matmul(a, b);
            const Var col = t.row_sum(m);
            return t.add(t.sum(t.square(t.flatten_rows(m))), t.sum(t.mul_col(m, t.tanh(col))));
        });
        check_op("add_tiled_rows/sub/add_scalar", [](Tape& t, Var a, Var, Var r) {
            const Var tiled = t.add_tiled_rows(t.slice_cols(a, 0, 2), r);
            return t.sum(t.square(t.add_scalar(t.sub(tiled, t.slice_cols(a, 2, 2)), 0.5)));
        });
        check_op("attention_pool", [](Tape& t, Var a, Var, Var r) {
            // 3 rows x 4 = one sample of 3 steps; E = 4 with 2 heads.
            const Var q = t.concat_cols({r, r});
            return t.sum(t.square(t.attention_pool(a, t.tanh(a), q, 3, 2)));
        });
        check_op("gaussian helpers", [](Tape& t, Var a, Var b, Var) {
            const Var mu = t.slice_cols(a, 0, 2);
            const Var lv = t.scale(t.slice_cols(a, 2, 2), 0.3);
            const Var mu2 = t.slice_cols(t.matmul(a, b), 0, 2);
            Matrix eps(3, 2);
            eps << 0.1, -0.4, 1.2, 0.3, -0.7, 0.9;
            const Var z = nn::gaussian_sample(t, mu, lv, eps);
            return t.add(t.add(t.sum(t.square(z)), nn::kl_standard_normal(t, mu, lv)),
                         nn::kl_gaussians(t, mu, lv, mu2, t.scale(lv, -0.5)));
        });
    }

    TEST_CASE("detach blocks gradients") {
        nn::ParameterStore store;
        const auto i = store.add("w", Matrix::Constant(1, 1, 2.0));
        Tape t;
        const Var w = t.param(store, i);
        const Var y = t.add(t.mul(w, w), t.detach(t.mul(w, w)));
        t.backward(y);
        CHECK(store[i].grad(0, 0) == doctest::Approx(4.0));
    }

    TEST_CASE("attention weights are a simplex per head") {
        Rng rng(3);
        Tape t;
        Matrix w;
        const Var k = t.constant(random_matrix(10, 6, rng));
        t.attention_pool(k, k, t.constant(random_matrix(1, 6, rng)), 5, 3, &w);
        REQUIRE(w.rows() == 2 * 3);
        REQUIRE(w.cols() == 5);
        CHECK(w.minCoeff() >= 0.0);
        for (Eigen::Index r = 0; r < w.rows(); ++r) CHECK(w.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("Gaussian KL closed forms") {
        Tape t;
        Matrix mu = Matrix::Zero(1, 4), lv = Matrix::Zero(1, 4);
        CHECK(t.value(nn::kl_standard_normal(t, t.constant(mu), t.constant(lv)))(0, 0) == 0.0);
        mu(0, 0) = 1.0;
        CHECK(t.value(nn::kl_standard_normal(t, t.constant(mu), t.constant(lv)))(0, 0) ==
              doctest::Approx(0.5).epsilon(1e-15));
        const Var same = nn::kl_gaussians(t, t.constant(mu), t.constant(lv), t.constant(mu), t.constant(lv));
        CHECK(t.value(same)(0, 0) == 0.0);
    }

    TEST_CASE("parameter store bookkeeping") {
        Rng rng(1);
        nn::ParameterStore store;
        nn::Linear::create(store, "enc.l0", 3, 2, rng);
        nn::Linear::create(store, "dec.l0", 2, 1, rng);
        const auto enc = store.hash("enc.");
        const auto dec = store.hash("dec.");
        store.set_trainable("enc.", false);
        for (auto& p : store.all()) p.grad = Matrix::Ones(p.value.rows(), p.value.cols());
        nn::Adam adam;
        adam.step(store, 0.1);
        CHECK(store.hash("enc.") == enc);
        CHECK(store.hash("dec.") != dec);
        CHECK(store.all_finite());
        CHECK(store.scalar_count() == 3 * 2 + 2 + 2 + 1);
    }

    TEST_CASE("Adam minimizes a quadratic") {
        nn::ParameterStore store;
        const auto i = store.add("x", Matrix::Constant(1, 2, 3.0));
        nn::Adam adam;
        for (int step = 0; step < 2000; ++step) {
            store.zero_grad();
            Tape t;
            t.backward(t.sum(t.square(t.add_scalar(t.param(store, i), -1.0))));
            adam.step(store, 0.01);
        }
        CHECK(std::abs(store[i].value(0, 0) - 1.0) < 1e-3);
    }
}
