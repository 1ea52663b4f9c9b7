#include <cmath>

#include "doctest.h"
#include "specguard/msvp.hpp"

using namespace specguard;

namespace {

// Runs power iteration to convergence so sigma/u/v are essentially exact.
PowerIterState converged_state(const Matrix& w, Rng& rng) {
    PowerIterState st = init_power_state(w.rows(), w.cols(), rng);
    power_iteration(w, st, 500);
    return st;
}

Matrix gapped_matrix(int m, int n, Rng& rng) {
    // Rejection-sample until the top-two oracle gap is comfortable.
    for (;;) {
        const Matrix w = gaussian_matrix(m, n, rng);
        const std::vector<double> sv = svd_oracle(w);
        if (sv[0] - sv[1] > 0.25) return w;
    }
}

}  // namespace

TEST_CASE("all-zero weights give zero loss and zero gradient") {
    Graph g;
    Rng rng(61);
    const Graph::Value w = g.leaf(Matrix(3, 2));
    PowerIterState st = init_power_state(3, 2, rng);
    const Graph::Value loss = msvp_loss(g, {{w, &st, 0.5}}, 1);
    CHECK(g.value(loss).at(0, 0) == real(0));
    g.backward(loss);
    for (real v : g.grad(w).raw()) CHECK(v == real(0));
}

TEST_CASE("converged diagonal case reproduces lambda sigma^2") {
    Graph g;
    Rng rng(62);
    const Matrix wd = Matrix::diag({2.0, 1.0});
    const Graph::Value w = g.leaf(wd);
    PowerIterState st = converged_state(wd, rng);
    const Graph::Value loss = msvp_loss(g, {{w, &st, 0.5}}, 1);
    CHECK(g.value(loss).at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("missing or mismatched state is a contract error") {
    Graph g;
    Rng rng(63);
    const Graph::Value w = g.leaf(gaussian_matrix(3, 2, rng));
    CHECK_THROWS_AS(msvp_loss(g, {{w, nullptr, 0.1}}, 1), ContractError);
    PowerIterState wrong = init_power_state(2, 2, rng);
    CHECK_THROWS_AS(msvp_loss(g, {{w, &wrong, 0.1}}, 1), ContractError);
}

TEST_CASE("gradient is 2 lambda sigma u v^T and matches oracle finite differences") {
    Rng rng(64);
    for (int t = 0; t < 8; ++t) {
        const Matrix w0 = gapped_matrix(4, 3, rng);
        PowerIterState st = converged_state(w0, rng);
        const double lambda = 0.7;

        Graph g;
        const Graph::Value w = g.leaf(w0);
        PowerIterState step_state = st;
        const Graph::Value loss = msvp_loss(g, {{w, &step_state, lambda}}, 1);
        g.backward(loss);
        const Matrix grad = g.grad(w);

        // Closed form from the refreshed state.
        const Matrix expected = scale(outer(step_state.u, step_state.v),
                                      static_cast<real>(2.0 * lambda * step_state.sigma));
        for (std::size_t k = 0; k < grad.size(); ++k)
            CHECK(grad.raw()[k] == doctest::Approx(expected.raw()[k]).epsilon(1e-10));

        // Central differences of lambda * sigma_max^2 measured by the oracle.
        const double h = 1e-5;
        double max_err = 0.0;
        for (int i = 0; i < w0.rows(); ++i)
            for (int j = 0; j < w0.cols(); ++j) {
                Matrix plus = w0, minus = w0;
                plus.at(i, j) += static_cast<real>(h);
                minus.at(i, j) -= static_cast<real>(h);
                const double sp = svd_oracle(plus)[0];
                const double sm = svd_oracle(minus)[0];
                const double fd = lambda * (sp * sp - sm * sm) / (2.0 * h);
                max_err = std::max(max_err, std::abs(fd - static_cast<double>(grad.at(i, j))));
            }
        CHECK(max_err < 1e-4);
    }
}

TEST_CASE("a pure-penalty gradient step strictly decreases sigma_max") {
    Rng rng(65);
    for (int t = 0; t < 6; ++t) {
        Matrix w0 = gapped_matrix(5, 3, rng);
        PowerIterState st = converged_state(w0, rng);
        const double lambda = 0.3;
        const double sigma0 = svd_oracle(w0)[0];
        const double lr = 0.9 / (4.0 * lambda * sigma0);  // below the 1/(4 lambda sigma) cap

        Graph g;
        const Graph::Value w = g.leaf(w0);
        const Graph::Value loss = msvp_loss(g, {{w, &st, lambda}}, 1);
        g.backward(loss);
        const Matrix stepped = sub(w0, scale(g.grad(w), static_cast<real>(lr)));
        CHECK(svd_oracle(stepped)[0] < sigma0 - 1e-9);
    }
}

TEST_CASE("detached gradient is a descent direction for oracle sigma^2") {
    Rng rng(66);
    for (int t = 0; t < 6; ++t) {
        const Matrix w0 = gapped_matrix(4, 4, rng);
        PowerIterState st = converged_state(w0, rng);
        const Matrix dir = scale(outer(st.u, st.v), static_cast<real>(2.0 * st.sigma));
        const double h = 1e-6;
        const Matrix moved = sub(w0, scale(dir, static_cast<real>(h)));
        const double s0 = svd_oracle(w0)[0];
        const double s1 = svd_oracle(moved)[0];
        CHECK(s1 * s1 < s0 * s0);  // directional derivative negative
    }
}

TEST_CASE("loss is invariant under orthogonal rotations of the weight") {
    Rng rng(67);
    const Matrix w0 = gaussian_matrix(4, 3, rng);
    const Matrix u = random_orthogonal(4, rng);
    const Matrix v = random_orthogonal(3, rng);
    const Matrix rotated = matmul(matmul(u, w0), v);
    CHECK(svd_oracle(rotated)[0] == doctest::Approx(svd_oracle(w0)[0]).epsilon(1e-11));

    Graph g;
    PowerIterState st1 = converged_state(w0, rng);
    PowerIterState st2 = converged_state(rotated, rng);
    const Graph::Value l1 = msvp_loss(g, {{g.leaf(w0), &st1, 1.0}}, 200);
    const Graph::Value l2 = msvp_loss(g, {{g.leaf(rotated), &st2, 1.0}}, 200);
    CHECK(g.value(l1).at(0, 0) == doctest::Approx(g.value(l2).at(0, 0)).epsilon(1e-9));
}

TEST_CASE("zero-lambda terms refresh their state but add no nodes") {
    Rng rng(68);
    Graph g;
    const Matrix w0 = gaussian_matrix(3, 3, rng);
    const Graph::Value w = g.leaf(w0);
    PowerIterState st = init_power_state(3, 3, rng);
    const double sigma_before = st.sigma;
    const int nodes_before = g.size();
    const Graph::Value loss = msvp_loss(g, {{w, &st, 0.0}}, 1);
    CHECK(g.value(loss).at(0, 0) == real(0));
    CHECK(st.sigma != sigma_before);         // estimator still ran
    CHECK(g.size() == nodes_before + 1);     // just the zero scalar
}

TEST_CASE("total objective sums the two scalars and both gradients flow") {
    Rng rng(69);
    Graph g;
    const Matrix x0 = gaussian_matrix(1, 4, rng);
    const Graph::Value x = g.leaf(x0);
    const Graph::Value cls = g.cross_entropy(x, {1});
    const Matrix w0 = gaussian_matrix(4, 2, rng);
    const Graph::Value w = g.leaf(w0);
    PowerIterState st = converged_state(w0, rng);
    const Graph::Value msvp = msvp_loss(g, {{w, &st, 2.0}}, 1);
    const Graph::Value total = total_objective(g, cls, msvp);
    CHECK(g.value(total).at(0, 0) ==
          doctest::Approx(static_cast<double>(g.value(cls).at(0, 0)) + g.value(msvp).at(0, 0))
              .epsilon(1e-15));
    g.backward(total);

    // Gradient additivity: total gradients equal the sum of the separate
    // backward passes.
    Graph g1;
    const Graph::Value x1 = g1.leaf(x0);
    g1.backward(g1.cross_entropy(x1, {1}));
    Graph g2;
    const Graph::Value w2 = g2.leaf(w0);
    PowerIterState st2 = converged_state(w0, rng);
    g2.backward(msvp_loss(g2, {{w2, &st2, 2.0}}, 1));

    for (std::size_t k = 0; k < x0.size(); ++k)
        CHECK(g.grad(x).raw()[k] == doctest::Approx(g1.grad(x1).raw()[k]).epsilon(1e-12));
    for (std::size_t k = 0; k < w0.size(); ++k)
        CHECK(g.grad(w).raw()[k] == doctest::Approx(g2.grad(w2).raw()[k]).epsilon(1e-9));

    CHECK_THROWS_AS(total_objective(g, x, msvp), ContractError);
}

TEST_CASE("uniform-logit cls plus msvp constant composes") {
    Graph g;
    Rng rng(70);
    const Graph::Value cls = g.cross_entropy(g.leaf(Matrix(1, 10)), {4});
    const Matrix wd = Matrix::diag({2.0, 1.0});
    PowerIterState st = converged_state(wd, rng);
    const Graph::Value msvp = msvp_loss(g, {{g.leaf(wd), &st, 0.5}}, 1);
    const Graph::Value total = total_objective(g, cls, msvp);
    CHECK(g.value(total).at(0, 0) == doctest::Approx(std::log(10.0) + 2.0).epsilon(1e-12));
}
