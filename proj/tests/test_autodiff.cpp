#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "csnn/autodiff.hpp"
#include "csnn/model.hpp"
#include "csnn/training.hpp"
#include "helpers.hpp"

using namespace csnn;
using ad::Cwise;
using ad::Tape;
using ad::Var;

namespace {

// Gradient of a scalar-valued tape program w.r.t. one leaf, checked against
// central finite differences. `program` must rebuild the graph from the
// given leaf each call (backward() frees tape values).
void gradcheck(const Eigen::MatrixXd& x0,
               const std::function<Var(Tape&, Var)>& program,
               double step = 1e-6, double tol = 1e-6) {
    Tape tape;
    Var leaf = tape.leaf(x0);
    Var out = program(tape, leaf);
    REQUIRE(tape.value(out).size() == 1);
    tape.backward(out);
    const Eigen::MatrixXd grad = tape.grad(leaf);
    REQUIRE(grad.rows() == x0.rows());
    REQUIRE(grad.cols() == x0.cols());

    auto eval = [&](const Eigen::MatrixXd& x) {
        Tape t;
        return t.value(program(t, t.leaf(x)))(0, 0);
    };
    double denom = 1.0;
    for (int r = 0; r < x0.rows(); ++r) {
        for (int c = 0; c < x0.cols(); ++c) {
            Eigen::MatrixXd xp = x0, xm = x0;
            xp(r, c) += step;
            xm(r, c) -= step;
            const double fd = (eval(xp) - eval(xm)) / (2.0 * step);
            denom = std::max({denom, std::abs(fd), std::abs(grad(r, c))});
            CHECK(std::abs(grad(r, c) - fd) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("matmul / add / sub / scale / add_bias") {
    Rng rng(1);
    const Eigen::MatrixXd a0 = gaussian_matrix(3, 4, 1.0, rng);
    const Eigen::MatrixXd b0 = gaussian_matrix(4, 2, 1.0, rng);
    gradcheck(a0, [&](Tape& t, Var a) {
        return t.sum_all(t.matmul(a, t.constant(b0)));
    });
    gradcheck(b0, [&](Tape& t, Var b) {
        return t.sum_all(t.matmul(t.constant(a0), b));
    });
    gradcheck(a0, [&](Tape& t, Var a) {
        Var twice = t.add(a, t.scale(a, 2.0));
        return t.sum_all(t.hadamard(twice, t.sub(twice, t.constant(a0))));
    });
    const Eigen::MatrixXd bias0 = gaussian_matrix(1, 4, 1.0, rng);
    gradcheck(bias0, [&](Tape& t, Var b) {
        return t.sum_all(t.hadamard(t.add_bias(t.constant(a0), b),
                                    t.add_bias(t.constant(a0), b)));
    });
}

TEST_CASE("cwise nonlinearities") {
    Rng rng(2);
    // offset away from the ReLU kink so finite differences are clean
    Eigen::MatrixXd x0 = gaussian_matrix(4, 3, 1.0, rng);
    for (int i = 0; i < x0.size(); ++i)
        if (std::abs(x0(i)) < 0.05) x0(i) = 0.3;
    for (Cwise fn : {Cwise::Identity, Cwise::Relu, Cwise::Gelu, Cwise::Tanh,
                     Cwise::Softplus}) {
        gradcheck(x0, [&](Tape& t, Var x) {
            return t.sum_all(t.hadamard(t.cwise(x, fn), t.constant(x0)));
        });
    }
}

TEST_CASE("hadamard / cwise_div / const_mul") {
    Rng rng(3);
    const Eigen::MatrixXd a0 = gaussian_matrix(3, 3, 1.0, rng);
    Eigen::MatrixXd b0 = gaussian_matrix(3, 3, 1.0, rng);
    b0 = b0.cwiseAbs().array() + 0.5;  // keep divisors away from zero
    gradcheck(a0, [&](Tape& t, Var a) {
        return t.sum_all(t.cwise_div(t.hadamard(a, a), t.constant(b0)));
    });
    gradcheck(b0, [&](Tape& t, Var b) {
        return t.sum_all(t.cwise_div(t.constant(a0), b));
    });
    gradcheck(a0, [&](Tape& t, Var a) {
        return t.sum_all(t.const_mul(a, b0));
    });
}

TEST_CASE("layer_norm forward and gradient") {
    Rng rng(11);
    const Eigen::MatrixXd x0 = gaussian_matrix(4, 6, 1.5, rng);
    Tape t;
    Var y = t.layer_norm(t.constant(x0));
    const Eigen::MatrixXd& yv = t.value(y);
    for (int r = 0; r < yv.rows(); ++r) {
        CHECK(std::abs(yv.row(r).mean()) < 1e-12);
        CHECK(std::abs(yv.row(r).squaredNorm() / yv.cols() - 1.0) < 1e-4);
    }
    const Eigen::MatrixXd probe = gaussian_matrix(4, 6, 1.0, rng);
    gradcheck(x0, [&](Tape& t2, Var x) {
        return t2.sum_all(t2.hadamard(t2.layer_norm(x), t2.constant(probe)));
    });
}

TEST_CASE("block_scale and const_block_scale") {
    Rng rng(4);
    const int n = 4, d = 2, h = 3;
    const Eigen::MatrixXd x0 = gaussian_matrix(n * d, h, 1.0, rng);
    const Eigen::MatrixXd s0 = gaussian_matrix(n, 1, 1.0, rng);
    gradcheck(x0, [&](Tape& t, Var x) {
        return t.sum_all(t.hadamard(t.block_scale(t.constant(s0), x, d), x));
    });
    gradcheck(s0, [&](Tape& t, Var s) {
        return t.sum_all(t.hadamard(t.block_scale(s, t.constant(x0), d),
                                    t.constant(x0)));
    });
    // constant variant: check forward semantics directly
    Tape t;
    Var y = t.const_block_scale(t.constant(x0), s0, d);
    for (int i = 0; i < n; ++i)
        CHECK(testutil::max_abs(t.value(y).middleRows(i * d, d) -
                                s0(i, 0) * x0.middleRows(i * d, d)) < 1e-14);
}

TEST_CASE("per_node_map both orientations") {
    Rng rng(5);
    const int n = 3, d = 2, h = 4;
    const Eigen::MatrixXd q0 = gaussian_matrix(n * d, d, 1.0, rng);
    const Eigen::MatrixXd x0 = gaussian_matrix(n * d, h, 1.0, rng);
    for (bool transpose : {false, true}) {
        gradcheck(q0, [&](Tape& t, Var q) {
            return t.sum_all(t.hadamard(t.per_node_map(q, t.constant(x0), d, transpose),
                                        t.constant(x0)));
        });
        gradcheck(x0, [&](Tape& t, Var x) {
            return t.sum_all(t.hadamard(t.per_node_map(t.constant(q0), x, d, transpose),
                                        t.constant(x0)));
        });
    }
    // forward semantics
    Tape t;
    Var y = t.per_node_map(t.constant(q0), t.constant(x0), d, false);
    for (int i = 0; i < n; ++i)
        CHECK(testutil::max_abs(t.value(y).middleRows(i * d, d) -
                                q0.middleRows(i * d, d) * x0.middleRows(i * d, d)) <
              1e-13);
}

TEST_CASE("neighbor_sum matches adjacency") {
    Rng rng(6);
    const auto g = testutil::random_graph(6, 0.5, rng);
    const int d = 2, h = 3;
    const Eigen::MatrixXd x0 = gaussian_matrix(g.num_nodes * d, h, 1.0, rng);
    Tape t;
    Var y = t.neighbor_sum(g, t.constant(x0), d);
    for (int i = 0; i < g.num_nodes; ++i) {
        Eigen::MatrixXd want = Eigen::MatrixXd::Zero(d, h);
        for (int j : g.neighbors[i]) want += x0.middleRows(j * d, d);
        CHECK(testutil::max_abs(t.value(y).middleRows(i * d, d) - want) < 1e-13);
    }
    gradcheck(x0, [&](Tape& t2, Var x) {
        return t2.sum_all(t2.hadamard(t2.neighbor_sum(g, x, d), t2.constant(x0)));
    });
}

TEST_CASE("kron_left") {
    Rng rng(7);
    const int n = 4, d = 3, h = 2;
    const Eigen::MatrixXd w0 = gaussian_matrix(d, d, 1.0, rng);
    const Eigen::MatrixXd x0 = gaussian_matrix(n * d, h, 1.0, rng);
    gradcheck(w0, [&](Tape& t, Var w) {
        return t.sum_all(t.hadamard(t.kron_left(w, t.constant(x0), n, d),
                                    t.constant(x0)));
    });
    gradcheck(x0, [&](Tape& t, Var x) {
        return t.sum_all(t.hadamard(t.kron_left(t.constant(w0), x, n, d),
                                    t.constant(x0)));
    });
}

TEST_CASE("blocks_to_rows round trip") {
    Rng rng(8);
    const int n = 3, d = 2, h = 4;
    const Eigen::MatrixXd x0 = gaussian_matrix(n * d, h, 1.0, rng);
    Tape t;
    Var x = t.constant(x0);
    Var rows = t.blocks_to_rows(x, n, d, h);
    CHECK(t.value(rows).rows() == n);
    CHECK(t.value(rows).cols() == d * h);
    // row-major block flatten
    CHECK(t.value(rows)(1, 0) == x0(d, 0));
    CHECK(t.value(rows)(0, h) == x0(1, 0));
    Var back = t.rows_to_blocks(rows, n, d, h);
    CHECK(testutil::max_abs(t.value(back) - x0) == 0.0);
    gradcheck(x0, [&](Tape& t2, Var v) {
        Var r = t2.blocks_to_rows(v, n, d, h);
        return t2.sum_all(t2.hadamard(r, r));
    });
    const Eigen::MatrixXd r0 = gaussian_matrix(n, d * h, 1.0, rng);
    gradcheck(r0, [&](Tape& t2, Var v) {
        Var b = t2.rows_to_blocks(v, n, d, h);
        return t2.sum_all(t2.hadamard(b, b));
    });
}

TEST_CASE("householder_stack forward and gradient") {
    Rng rng(9);
    const int n = 3, d = 2, k = 2;
    const Eigen::MatrixXd v0 = gaussian_matrix(n, k * d, 1.0, rng);
    Tape t;
    Var q = t.householder_stack(t.constant(v0), n, d, k);
    const Eigen::MatrixXd qv = t.value(q);
    REQUIRE(qv.rows() == n * d);
    for (int i = 0; i < n; ++i) {
        // matches the scalar-path product of reflections
        Eigen::MatrixXd refl(d, k);
        for (int f = 0; f < k; ++f) refl.col(f) = v0.row(i).segment(f * d, d);
        CHECK(testutil::max_abs(qv.middleRows(i * d, d) -
                                householder_orthogonal(refl)) < 1e-12);
    }
    const Eigen::MatrixXd probe = gaussian_matrix(n * d, d, 1.0, rng);
    gradcheck(v0, [&](Tape& t2, Var v) {
        Var q2 = t2.householder_stack(v, n, d, k);
        return t2.sum_all(t2.hadamard(q2, t2.constant(probe)));
    }, 1e-6, 1e-5);
}

TEST_CASE("cross_entropy value and gradient") {
    Rng rng(10);
    const Eigen::MatrixXd logits0 = gaussian_matrix(5, 3, 1.0, rng);
    const std::vector<int> labels{0, 2, 1, kUnlabeled, 2};
    const std::vector<int> mask{0, 1, 2, 4};
    Tape t;
    Var loss = t.cross_entropy(t.constant(logits0), labels, mask);
    CHECK(t.value(loss)(0, 0) ==
          doctest::Approx(loss_cross_entropy(logits0, labels, mask)).epsilon(1e-12));
    gradcheck(logits0, [&](Tape& t2, Var l) {
        return t2.cross_entropy(l, labels, mask);
    });
}

TEST_CASE("cross_entropy is shift invariant (stable log-sum-exp)") {
    Rng rng(11);
    Eigen::MatrixXd logits0 = gaussian_matrix(3, 4, 1.0, rng);
    const std::vector<int> labels{1, 0, 3};
    const std::vector<int> mask{0, 1, 2};
    Tape t;
    const double a = t.value(t.cross_entropy(t.constant(logits0), labels, mask))(0, 0);
    logits0.array() += 1000.0;
    Tape t2;
    const double b =
        t2.value(t2.cross_entropy(t2.constant(logits0), labels, mask))(0, 0);
    CHECK(a == doctest::Approx(b).epsilon(1e-9));
    CHECK(std::isfinite(b));
}

TEST_CASE("repeated forward passes are bit identical") {
    Rng rng(12);
    const auto g = testutil::random_graph(6, 0.5, rng);
    const Eigen::MatrixXd x0 = gaussian_matrix(g.num_nodes * 2, 3, 1.0, rng);
    auto run = [&] {
        Tape t;
        Var y = t.neighbor_sum(g, t.constant(x0), 2);
        return Eigen::MatrixXd(t.value(y));
    };
    const Eigen::MatrixXd a = run(), b = run();
    CHECK((a.array() == b.array()).all());
}
