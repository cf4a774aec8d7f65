#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <vector>

#include "visitgen/autograd.hpp"
#include "visitgen/nn.hpp"
#include "visitgen/rng.hpp"

using namespace visitgen;
using ag::Tape;
using ag::Var;

namespace {

using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

Matrix random_matrix(int r, int c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (double& v : m.a) v = scale * rng.uniform(-1.0, 1.0);
    return m;
}

double eval_scalar(const GraphFn& f, const std::vector<Matrix>& inputs) {
    Tape t;
    std::vector<Var> leaves;
    for (const auto& m : inputs) leaves.push_back(t.leaf(m));
    return t.val(f(t, leaves))(0, 0);
}

// Central finite differences on every entry of every leaf vs backward().
void check_gradients(const GraphFn& f, std::vector<Matrix> inputs, double tol = 1e-6,
                     double h = 1e-6) {
    Tape t;
    std::vector<Var> leaves;
    for (const auto& m : inputs) leaves.push_back(t.leaf(m));
    Var root = f(t, leaves);
    REQUIRE(t.val(root).rows == 1);
    REQUIRE(t.val(root).cols == 1);
    t.backward(root);

    for (std::size_t li = 0; li < inputs.size(); ++li) {
        const Matrix& analytic = t.grad(leaves[li]);
        REQUIRE(analytic.size() == inputs[li].size());
        for (std::size_t i = 0; i < inputs[li].size(); ++i) {
            std::vector<Matrix> lo = inputs, hi = inputs;
            lo[li].a[i] -= h;
            hi[li].a[i] += h;
            const double fd = (eval_scalar(f, hi) - eval_scalar(f, lo)) / (2.0 * h);
            const double an = analytic.a[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1.0});
            INFO("leaf " << li << " entry " << i << " fd=" << fd << " an=" << an);
            CHECK(std::abs(fd - an) / denom < tol);
        }
    }
}

Matrix sum_weights(int r, int c, Rng& rng) { return random_matrix(r, c, rng); }

}  // namespace

TEST_CASE("arithmetic op gradients") {
    Rng rng(101);
    const Matrix W = sum_weights(3, 4, rng);

    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.add(in[0], in[1]), W);
        },
        {random_matrix(3, 4, rng), random_matrix(3, 4, rng)});

    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.sub(in[0], in[1]), W);
        },
        {random_matrix(3, 4, rng), random_matrix(3, 4, rng)});

    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.affine(in[0], -1.7, 0.3), W);
        },
        {random_matrix(3, 4, rng)});

    const Matrix C = random_matrix(3, 4, rng);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.mul_const(t.add_const(in[0], C), C), W);
        },
        {random_matrix(3, 4, rng)});

    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.add_rowvec(in[0], in[1]), W);
        },
        {random_matrix(3, 4, rng), random_matrix(1, 4, rng)});
}

TEST_CASE("column-broadcast op gradients") {
    Rng rng(102);
    const Matrix W = sum_weights(3, 4, rng);
    const Matrix Wc = sum_weights(3, 1, rng);

    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.sub_colvec(in[0], in[1]), W);
        },
        {random_matrix(3, 4, rng), random_matrix(3, 1, rng)});

    const Matrix X = random_matrix(3, 1, rng);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.sub_const_col(in[0], X), W);
        },
        {random_matrix(3, 4, rng)});

    // Keep denominators away from zero.
    Matrix denom = random_matrix(3, 4, rng);
    for (double& v : denom.a) v = 1.5 + std::abs(v);
    Matrix dcol = random_matrix(3, 1, rng);
    for (double& v : dcol.a) v = 1.5 + std::abs(v);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.div(in[0], in[1]), W);
        },
        {random_matrix(3, 4, rng), denom});
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.div_colvec(in[0], in[1]), W);
        },
        {random_matrix(3, 4, rng), dcol});
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.rowsum(in[0]), Wc);
        },
        {random_matrix(3, 4, rng)});
}

TEST_CASE("nonlinearity gradients") {
    Rng rng(103);
    const Matrix W = sum_weights(3, 4, rng);

    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) { return t.weighted_sum(t.square(in[0]), W); },
        {random_matrix(3, 4, rng)});

    Matrix pos = random_matrix(3, 4, rng);
    for (double& v : pos.a) v = 0.5 + std::abs(v);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) { return t.weighted_sum(t.log(in[0]), W); },
        {pos});

    // Keep ReLU inputs away from the kink.
    Matrix away = random_matrix(3, 4, rng);
    for (double& v : away.a)
        if (std::abs(v) < 0.05) v = 0.1;
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) { return t.weighted_sum(t.relu(in[0]), W); },
        {away});

    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.softplus_eps(in[0], 1e-4), W);
        },
        {random_matrix(3, 4, rng)});
}

TEST_CASE("matmul gradients") {
    Rng rng(104);
    const Matrix W = sum_weights(3, 5, rng);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.matmul(in[0], in[1]), W);
        },
        {random_matrix(3, 4, rng), random_matrix(4, 5, rng)});

    const Matrix W2 = sum_weights(3, 6, rng);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.matmul_nt(in[0], in[1]), W2);
        },
        {random_matrix(3, 4, rng), random_matrix(6, 4, rng)});
}

TEST_CASE("shape op gradients") {
    Rng rng(105);
    const Matrix W = sum_weights(3, 7, rng);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.concat_cols({in[0], in[1]}), W);
        },
        {random_matrix(3, 4, rng), random_matrix(3, 3, rng)});

    const Matrix Ws = sum_weights(3, 2, rng);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.slice_cols(in[0], 1, 3), Ws);
        },
        {random_matrix(3, 4, rng)});

    const Matrix Wr = sum_weights(2, 4, rng);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.slice_rows(in[0], 1, 3), Wr);
        },
        {random_matrix(4, 4, rng)});

    const Matrix Wg = sum_weights(4, 3, rng);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.gather_rows(in[0], {2, 0, 2, 1}), Wg);
        },
        {random_matrix(3, 3, rng)});

    const Matrix Wp = sum_weights(3, 1, rng);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.pick_per_row(in[0], {2, 0, 1}), Wp);
        },
        {random_matrix(3, 4, rng)});
}

TEST_CASE("rowwise reduction gradients") {
    Rng rng(106);
    const Matrix W = sum_weights(3, 4, rng);
    const Matrix Wc = sum_weights(3, 1, rng);

    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.softmax_rows(in[0]), W);
        },
        {random_matrix(3, 4, rng)});

    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.logsumexp_rows(in[0]), Wc);
        },
        {random_matrix(3, 4, rng)});

    // Masked softmax: gradients flow only through open columns.
    Matrix mask(3, 4);
    mask(0, 3) = nn::kMaskOff;
    mask(1, 0) = nn::kMaskOff;
    mask(2, 2) = nn::kMaskOff;
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.softmax_rows(in[0], &mask), W);
        },
        {random_matrix(3, 4, rng)});
}

TEST_CASE("masked softmax zeroes closed columns exactly") {
    Tape t;
    Matrix x(2, 3);
    x(0, 0) = 1.0;
    x(0, 1) = 2.0;
    x(0, 2) = 3.0;
    x(1, 0) = -1.0;
    x(1, 1) = 0.5;
    x(1, 2) = 0.25;
    Matrix mask(2, 3);
    mask(0, 2) = nn::kMaskOff;
    Var y = t.softmax_rows(t.constant(x), &mask);
    CHECK(t.val(y)(0, 2) == 0.0);
    CHECK(t.val(y)(0, 0) + t.val(y)(0, 1) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("layernorm gradients") {
    Rng rng(107);
    const Matrix W = sum_weights(3, 5, rng);
    Matrix gamma = random_matrix(1, 5, rng);
    for (double& v : gamma.a) v += 1.5;
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.layernorm_rows(in[0], in[1], in[2], 1e-5), W);
        },
        {random_matrix(3, 5, rng), gamma, random_matrix(1, 5, rng)}, 1e-5);
}

TEST_CASE("time2vec gradients") {
    Rng rng(108);
    const Matrix W = sum_weights(4, 3, rng);
    Matrix tcol = random_matrix(4, 1, rng, 2.0);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            return t.weighted_sum(t.time2vec(in[0], in[1], tcol), W);
        },
        {random_matrix(1, 3, rng), random_matrix(1, 3, rng)});
}

TEST_CASE("composite graph: attention-like block") {
    Rng rng(109);
    const int L = 4, d = 6;
    Matrix mask(L, L);
    for (int r = 0; r < L; ++r)
        for (int c = 0; c < L; ++c) mask(r, c) = c <= r ? 0.0 : nn::kMaskOff;
    const Matrix W = sum_weights(L, d, rng);
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            Var q = t.matmul(in[0], in[1]);
            Var k = t.matmul(in[0], in[2]);
            Var v = t.matmul(in[0], in[3]);
            Var scores = t.affine(t.matmul_nt(q, k), 1.0 / std::sqrt(double(d)), 0.0);
            Var probs = t.softmax_rows(scores, &mask);
            return t.weighted_sum(t.matmul(probs, v), W);
        },
        {random_matrix(L, d, rng, 0.5), random_matrix(d, d, rng, 0.5),
         random_matrix(d, d, rng, 0.5), random_matrix(d, d, rng, 0.5)},
        1e-5);
}

TEST_CASE("composite graph: mixture negative log likelihood") {
    Rng rng(110);
    const int T = 5, K = 3;
    Matrix x(T, 1);
    for (int i = 0; i < T; ++i) x(i, 0) = rng.uniform(0.0, 2.0);
    Matrix w(T, 1, -1.0);  // NLL weights
    check_gradients(
        [&](Tape& t, const std::vector<Var>& in) {
            Var w_un = t.softplus_eps(in[0], 1e-4);
            Var weights = t.div_colvec(w_un, t.rowsum(w_un));
            Var sigma = t.softplus_eps(in[2], 1e-4);
            Var z = t.div(t.sub_const_col(in[1], x), sigma);
            Var logn = t.sub(t.affine(t.square(z), -0.5, -0.9189385332046727), t.log(sigma));
            Var arg = t.add(t.log(weights), logn);
            return t.weighted_sum(t.logsumexp_rows(arg), w);
        },
        {random_matrix(T, K, rng), random_matrix(T, K, rng), random_matrix(T, K, rng)}, 1e-5);
}

TEST_CASE("gradient accumulates across reuse") {
    // y = sum(a*b) + sum(a*c): da must be b + c.
    Rng rng(111);
    const Matrix B = random_matrix(2, 2, rng), C = random_matrix(2, 2, rng);
    Tape t;
    Var a = t.leaf(random_matrix(2, 2, rng));
    Var y = t.add(t.weighted_sum(a, B), t.weighted_sum(a, C));
    t.backward(y);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(t.grad(a).a[i] == Catch::Approx(B.a[i] + C.a[i]).epsilon(1e-12));
}
