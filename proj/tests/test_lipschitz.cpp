#include <cmath>

#include "doctest.h"
#include "specguard/lipschitz.hpp"

using namespace specguard;

TEST_CASE("bound is zero for all-zero weights") {
    const Matrix z(3, 2);
    CHECK(local_lipschitz_bound(z, z, z, 4, 1.0, 0.5) == 0.0);
}

TEST_CASE("bound on 1x1 identity weights matches the hand substitution") {
    // N = 1, B = 1, delta0 = 0, Wq = Wk = Wv = I (head_dim 1 so the score
    // scale is 1): 1 * 2 * 1 * (1 * 1 * 1 + 1) = 4.
    const Matrix eye = Matrix::identity(1);
    CHECK(local_lipschitz_bound(eye, eye, eye, 1, 1.0, 0.0) == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("bound equals the formula evaluated with oracle singular values") {
    Rng rng(51);
    for (int t = 0; t < 10; ++t) {
        const int d = rng.uniform_int(2, 5);
        const int hd = rng.uniform_int(1, 4);
        const Matrix wq = gaussian_matrix(d, hd, rng);
        const Matrix wk = gaussian_matrix(d, hd, rng);
        const Matrix wv = gaussian_matrix(d, hd, rng);
        const int n = rng.uniform_int(1, 6);
        const double anchor = rng.uniform(0.0, 2.0);
        const double delta0 = rng.uniform(0.0, 1.0);

        const double sq = svd_oracle(wq)[0];
        const double sk = svd_oracle(transpose(wk))[0];
        const double sv = svd_oracle(wv)[0];
        const double radius = anchor + delta0;
        const double expected =
            n * (n + 1) * radius * radius * (sv * sq * sk / std::sqrt(static_cast<double>(hd)) + sv);
        CHECK(local_lipschitz_bound(wq, wk, wv, n, anchor, delta0) ==
              doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("bound contract errors and monotonicity") {
    Rng rng(52);
    const Matrix w = gaussian_matrix(3, 2, rng);
    CHECK_THROWS_AS(local_lipschitz_bound(w, w, w, 3, 1.0, -0.1), ContractError);

    double prev = 0.0;
    for (double delta0 : {0.0, 0.1, 0.5, 2.0}) {
        const double b = local_lipschitz_bound(w, w, w, 3, 1.0, delta0);
        CHECK(b >= prev);
        prev = b;
    }
    CHECK(local_lipschitz_bound(w, w, w, 4, 1.0, 0.1) >= local_lipschitz_bound(w, w, w, 3, 1.0, 0.1));
    CHECK(local_lipschitz_bound(w, w, w, 3, 2.0, 0.1) >= local_lipschitz_bound(w, w, w, 3, 1.0, 0.1));
}

TEST_CASE("block row norm bound basics") {
    CHECK_THROWS_AS(block_row_norm_bound({}), ContractError);

    Rng rng(53);
    const Matrix b0 = gaussian_matrix(3, 2, rng);
    CHECK(block_row_norm_bound({b0}) == doctest::Approx(spectral_norm(b0)).epsilon(1e-12));

    const Matrix eye = Matrix::identity(3);
    CHECK(block_row_norm_bound({eye, eye}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    // Equality case: the concatenation [I, I] really has norm sqrt(2).
    Matrix cat(3, 6);
    for (int i = 0; i < 3; ++i) {
        cat.at(i, i) = 1.0;
        cat.at(i, 3 + i) = 1.0;
    }
    CHECK(spectral_norm(cat) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("block row norm bound dominates the concatenation norm") {
    Rng rng(54);
    for (int t = 0; t < 20; ++t) {
        const int rows = rng.uniform_int(2, 4);
        std::vector<Matrix> blocks;
        int total_cols = 0;
        for (int b = 0; b < 4; ++b) {
            const int cols = rng.uniform_int(1, 4);
            blocks.push_back(gaussian_matrix(rows, cols, rng));
            total_cols += cols;
        }
        Matrix cat(rows, total_cols);
        int off = 0;
        for (const Matrix& b : blocks) {
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < b.cols(); ++j) cat.at(i, off + j) = b.at(i, j);
            off += b.cols();
        }
        CHECK(block_row_norm_bound(blocks) >= spectral_norm(cat) - 1e-12);
    }
}

TEST_CASE("empirical ratio is zero for zero weights") {
    const int d = 3, hd = 2;
    AttentionWeights w;
    w.embed_dim = d;
    w.head_dim = hd;
    w.n_heads = 1;
    w.wq = {Matrix(d, hd)};
    w.wk = {Matrix(d, hd)};
    w.wv = {Matrix(d, hd)};
    Rng rng(55);
    const EmpiricalLipschitz emp = empirical_local_lipschitz(gaussian_matrix(4, d, rng), w, 0, 0.5, 50, 99);
    CHECK(emp.max_quotient == 0.0);
    CHECK(emp.max_jacobian_norm == 0.0);
}

TEST_CASE("zero Q/K attention is a fixed linear map bounded by ||Wv||") {
    Rng rng(56);
    const int d = 3, hd = 2, n = 4;
    AttentionWeights w = AttentionWeights::random(d, hd, 1, rng);
    w.wq[0] = Matrix(d, hd);
    w.wk[0] = Matrix(d, hd);
    const EmpiricalLipschitz emp =
        empirical_local_lipschitz(gaussian_matrix(n, d, rng), w, 0, 0.5, 200, 7);
    CHECK(emp.max_quotient <= spectral_norm(w.wv[0]) * (1.0 + 1e-9));
}

TEST_CASE("delta0 = 0 degenerates to the jacobian norm at the anchor") {
    Rng rng(57);
    const AttentionWeights w = AttentionWeights::random(3, 2, 1, rng, 0.8);
    const Matrix x0 = gaussian_matrix(4, 3, rng);
    const EmpiricalLipschitz emp = empirical_local_lipschitz(x0, w, 0, 0.0, 10, 1);
    CHECK(emp.max_quotient == 0.0);
    CHECK(emp.max_jacobian_norm ==
          doctest::Approx(spectral_norm(attention_jacobian_full(x0, w, 0))).epsilon(1e-12));
}

TEST_CASE("full jacobian norm at the anchor is below the delta0 = 0 bound") {
    Rng rng(60);
    for (int t = 0; t < 15; ++t) {
        const int n = rng.uniform_int(2, 6);
        const int d = rng.uniform_int(2, 4);
        const Matrix x = gaussian_matrix(n, d, rng);
        const AttentionWeights w = AttentionWeights::random(d, rng.uniform_int(1, 3), 1, rng, 0.8);
        const double jac_norm = spectral_norm(attention_jacobian_full(x, w, 0));
        const double bound =
            local_lipschitz_bound(w.wq[0], w.wk[0], w.wv[0], n, frobenius_norm(x), 0.0);
        CHECK(jac_norm <= bound);
    }
}

TEST_CASE("empirical quotients stay under the input-anchored bound") {
    Rng rng(58);
    for (int t = 0; t < 10; ++t) {
        const int n = rng.uniform_int(2, 6);
        const int d = rng.uniform_int(2, 4);
        const int hd = rng.uniform_int(1, 3);
        const Matrix x0 = gaussian_matrix(n, d, rng);
        const AttentionWeights w = AttentionWeights::random(d, hd, 1, rng, 0.7);
        const double delta0 = 0.25;
        const double bound = local_lipschitz_bound(w.wq[0], w.wk[0], w.wv[0], n,
                                                   frobenius_norm(x0), delta0);
        const EmpiricalLipschitz emp = empirical_local_lipschitz(x0, w, 0, delta0, 500, rng.next_u64());
        CHECK(emp.max_quotient <= bound);
        CHECK(emp.max_jacobian_norm <= bound);
    }
}

TEST_CASE("sensitivity check on explicit linear maps") {
    // W = 2I gives ratio exactly 2 for every direction.
    Rng rng(59);
    const Matrix w2 = scale(Matrix::identity(3), 2.0);
    const Matrix x0 = gaussian_matrix(3, 1, rng);
    const Matrix b3 = gaussian_matrix(3, 1, rng);
    std::vector<Matrix> dirs;
    for (int t = 0; t < 5; ++t) dirs.push_back(gaussian_matrix(3, 1, rng));
    CHECK(sensitivity_linearization_check(w2, b3, x0, dirs) == doctest::Approx(2.0).epsilon(1e-12));

    // diag(3, 1) along the axes.
    const Matrix d31 = Matrix::diag({3.0, 1.0});
    const Matrix z2(2, 1);
    Matrix e1(2, 1), e2(2, 1);
    e1.at(0, 0) = 1.0;
    e2.at(1, 0) = 1.0;
    CHECK(sensitivity_linearization_check(d31, z2, z2, {e1}) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(sensitivity_linearization_check(d31, z2, z2, {e2}) == doctest::Approx(1.0).epsilon(1e-14));

    // Top right-singular vector from the oracle achieves sigma_max.
    const Matrix w = gaussian_matrix(4, 4, rng);
    const SvdResult svd = svd_oracle_full(w);
    Matrix top(4, 1);
    for (int i = 0; i < 4; ++i) top.at(i, 0) = svd.right_vectors.at(i, 0);
    const Matrix z4(4, 1);
    const double ratio = sensitivity_linearization_check(w, z4, gaussian_matrix(4, 1, rng), {top});
    CHECK(std::abs(ratio - svd.values[0]) < 1e-9);
    CHECK(ratio <= spectral_norm(w) * (1.0 + 1e-12));
}

TEST_CASE("report serialization carries every field") {
    LipschitzReport report;
    LipschitzRecord r;
    r.layer = 1;
    r.head = 2;
    r.sigma_q = 0.25;
    r.sigma_k = 0.5;
    r.sigma_v = 0.75;
    r.bound_input = 10.0;
    r.bound_b = 20.0;
    r.bound_input_rss = 5.0;
    r.tokens = 4;
    r.anchor = 1.5;
    r.b_used = 2.0;
    r.delta0 = 0.1;
    report.records.push_back(r);
    const std::string text = report.to_text();
    CHECK(text.find("layer=1 head=2") != std::string::npos);
    CHECK(text.find("bound_input=10") != std::string::npos);
    const std::string csv = report.to_csv();
    CHECK(csv.find("sigma_q") != std::string::npos);
    CHECK(csv.find("0.25") != std::string::npos);
}
