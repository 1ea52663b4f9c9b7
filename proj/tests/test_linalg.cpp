#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "specguard/matrix.hpp"

using namespace specguard;

namespace {

// Closed-form singular values of a 2x2 matrix via the characteristic
// polynomial of A^T A; independent of the Jacobi path.
std::pair<double, double> svd2x2_reference(const Matrix& a) {
    const double p = static_cast<double>(a.at(0, 0)) * a.at(0, 0) + static_cast<double>(a.at(1, 0)) * a.at(1, 0);
    const double q = static_cast<double>(a.at(0, 0)) * a.at(0, 1) + static_cast<double>(a.at(1, 0)) * a.at(1, 1);
    const double r = static_cast<double>(a.at(0, 1)) * a.at(0, 1) + static_cast<double>(a.at(1, 1)) * a.at(1, 1);
    const double tr = p + r;
    const double det = p * r - q * q;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    return {std::sqrt(std::max(0.0, tr / 2.0 + disc)), std::sqrt(std::max(0.0, tr / 2.0 - disc))};
}

}  // namespace

TEST_CASE("matrix construction validates shape and finiteness") {
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::numeric_limits<real>::infinity()}), ContractError);
    CHECK_THROWS_AS(Matrix(1, 1, {std::nan("")}), ContractError);
}

TEST_CASE("matmul and transpose basics") {
    Rng rng(7);
    const Matrix a = gaussian_matrix(3, 4, rng);
    CHECK_THROWS_AS(matmul(a, a), ShapeError);

    const Matrix identity = Matrix::identity(3);
    const Matrix ia = matmul(identity, a);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(ia.raw()[k] == a.raw()[k]);

    const Matrix att = transpose(transpose(a));
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(att.raw()[k] == a.raw()[k]);
}

TEST_CASE("frobenius norm of I2 is sqrt(2)") {
    CHECK(frobenius_norm(Matrix::identity(2)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("svd oracle on fixed matrices") {
    const std::vector<double> d31 = svd_oracle(Matrix::diag({3.0, 1.0}));
    CHECK(d31[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(d31[1] == doctest::Approx(1.0).epsilon(1e-14));

    // Single nonzero entry.
    Matrix n(2, 2);
    n.at(0, 1) = 2.0;
    const std::vector<double> sv = svd_oracle(n);
    CHECK(sv[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(sv[1] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("svd oracle matches the 2x2 closed form") {
    Rng rng(123);
    for (int t = 0; t < 50; ++t) {
        const Matrix a = gaussian_matrix(2, 2, rng);
        const auto [s1, s2] = svd2x2_reference(a);
        const std::vector<double> sv = svd_oracle(a);
        CHECK(std::abs(sv[0] - s1) < 1e-12 * std::max(1.0, s1));
        CHECK(std::abs(sv[1] - s2) < 1e-12 * std::max(1.0, s1));
    }
}

TEST_CASE("svd oracle is transpose invariant") {
    Rng rng(99);
    for (int t = 0; t < 10; ++t) {
        const Matrix a = gaussian_matrix(5, 3, rng);
        const std::vector<double> sa = svd_oracle(a);
        const std::vector<double> sat = svd_oracle(transpose(a));
        REQUIRE(sa.size() == sat.size());
        for (std::size_t i = 0; i < sa.size(); ++i)
            CHECK(std::abs(sa[i] - sat[i]) < 1e-12 * std::max(1.0, sa[0]));
    }
}

TEST_CASE("svd oracle rejects matrices over the desk-scale cap") {
    CHECK_THROWS_AS(svd_oracle(Matrix(300, 300)), ShapeError);
}

TEST_CASE("svd oracle right vectors satisfy A v = sigma u") {
    Rng rng(314);
    const Matrix a = gaussian_matrix(6, 4, rng);
    const SvdResult svd = svd_oracle_full(a);
    for (std::size_t j = 0; j < svd.values.size(); ++j) {
        Matrix v(a.cols(), 1);
        for (int i = 0; i < a.cols(); ++i) v.at(i, 0) = svd.right_vectors.at(i, static_cast<int>(j));
        const Matrix av = matmul(a, v);
        CHECK(frobenius_norm(av) == doctest::Approx(svd.values[j]).epsilon(1e-10));
    }
}

TEST_CASE("power iteration on the identity converges in one round") {
    Rng rng(5);
    const Matrix a = Matrix::identity(3);
    PowerIterState st = init_power_state(3, 3, rng);
    const double sigma = power_iteration(a, st, 1);
    CHECK(sigma == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("power iteration error on diag(3,1) contracts at least 9x per round") {
    const Matrix a = Matrix::diag({3.0, 1.0});
    PowerIterState st;
    st.u = {static_cast<real>(1.0 / std::sqrt(2.0)), static_cast<real>(1.0 / std::sqrt(2.0))};
    st.v = st.u;
    double prev_err = -1.0;
    for (int k = 1; k <= 12; ++k) {
        PowerIterState fresh;
        fresh.u = {static_cast<real>(1.0 / std::sqrt(2.0)), static_cast<real>(1.0 / std::sqrt(2.0))};
        fresh.v = fresh.u;
        const double sigma = power_iteration(a, fresh, k);
        const double err = 3.0 - sigma;
        CHECK(err >= -1e-12);  // underestimate
        if (prev_err > 1e-14) CHECK(err <= prev_err / 9.0 + 1e-15);  // (sigma2/sigma1)^2 per round
        prev_err = err;
    }
}

TEST_CASE("power iteration matches the oracle on a seeded 8x8") {
    Rng rng(2024);
    const Matrix a = gaussian_matrix(8, 8, rng);
    PowerIterState st = init_power_state(8, 8, rng);
    const double sigma = power_iteration(a, st, 200);
    const double oracle = svd_oracle(a)[0];
    CHECK(std::abs(sigma - oracle) / oracle < 1e-10);
}

TEST_CASE("power iteration state stays unit norm and sigma is monotone") {
    Rng rng(11);
    const Matrix a = gaussian_matrix(12, 7, rng);
    PowerIterState st = init_power_state(12, 7, rng);
    double prev = 0.0;
    for (int it = 0; it < 60; ++it) {
        const double sigma = power_iteration(a, st, 1);
        CHECK(std::abs(norm2(st.u) - 1.0) < 1e-12);
        CHECK(std::abs(norm2(st.v) - 1.0) < 1e-12);
        CHECK(sigma >= prev - 1e-12);
        prev = sigma;
    }
    CHECK(prev <= svd_oracle(a)[0] * (1.0 + 1e-9));
}

TEST_CASE("power iteration contract errors") {
    Rng rng(1);
    const Matrix a = gaussian_matrix(4, 3, rng);
    PowerIterState st = init_power_state(4, 3, rng);
    CHECK_THROWS_AS(power_iteration(a, st, 0), ContractError);
    PowerIterState bad = init_power_state(5, 3, rng);
    CHECK_THROWS_AS(power_iteration(a, bad, 1), ShapeError);
}

TEST_CASE("power iteration on the zero matrix reports zero and keeps the state") {
    Rng rng(3);
    const Matrix zero(6, 4);
    PowerIterState st = init_power_state(6, 4, rng);
    const PowerIterState before = st;
    CHECK(power_iteration(zero, st, 5) == 0.0);
    CHECK(st.u == before.u);
    CHECK(st.v == before.v);
}

TEST_CASE("spectral norm basics") {
    CHECK(spectral_norm(Matrix(4, 4)) == 0.0);
    Rng rng(17);
    CHECK(spectral_norm(random_orthogonal(5, rng)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spectral norm falls back to power iteration above the oracle cap") {
    // 300x280 diagonal-spectrum matrix; the oracle refuses this size.
    Matrix a(300, 280);
    a.at(0, 0) = real(5);
    for (int i = 1; i < 280; ++i) a.at(i, i) = static_cast<real>(2.5 - 2.0 * i / 280.0);
    CHECK_THROWS_AS(svd_oracle(a), ShapeError);
    CHECK(spectral_norm(a) == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("spectral norm is submultiplicative on random pairs") {
    Rng rng(606);
    for (int t = 0; t < 100; ++t) {
        const Matrix a = gaussian_matrix(4, 5, rng);
        const Matrix b = gaussian_matrix(5, 3, rng);
        const double lhs = spectral_norm(matmul(a, b));
        const double rhs = spectral_norm(a) * spectral_norm(b);
        CHECK(lhs <= rhs * (1.0 + 1e-12));
    }
}
