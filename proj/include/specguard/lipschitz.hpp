#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "specguard/attention.hpp"
#include "specguard/matrix.hpp"

namespace specguard {

// Per-(layer, head) record of spectral norms, the two bound aggregations and
// the empirical measurements they must dominate.
struct LipschitzRecord {
    int layer = 0;
    int head = 0;
    double sigma_q = 0.0;
    double sigma_k = 0.0;
    double sigma_v = 0.0;
    double bound_input = 0.0;      // anchored at ||X0||_F, row-sum aggregation
    double bound_b = 0.0;          // anchored at B, row-sum aggregation
    double bound_input_rss = 0.0;  // root-sum-square aggregation of the same row bound
    double empirical_quotient = -1.0;  // -1 when not measured
    double empirical_max_jacobian_norm = -1.0;
    int tokens = 0;
    double anchor = 0.0;  // ||X0||_F used for bound_input
    double b_used = 0.0;  // B that anchored bound_b
    double delta0 = 0.0;
};

struct LipschitzReport {
    std::vector<LipschitzRecord> records;

    // One named-field record per line.
    std::string to_text() const;
    // Plot-ready comma-separated table with a header row.
    std::string to_csv() const;
};

// N(N+1)(anchor+delta0)^2 [ ||Wv|| * ||Wq|| ||Wk^T|| / sqrt(head_dim) + ||Wv|| ].
// The 1/sqrt(head_dim) score scale lives inside the Q-K product term, matching
// the A matrix the derivation bounds. head_dim is taken from wq's column count.
double local_lipschitz_bound(const Matrix& wq, const Matrix& wk, const Matrix& wv,
                             int tokens, double anchor, double delta0);
double local_lipschitz_bound(const AttentionWeights& w, int head, int tokens, double anchor, double delta0);

// Same per-row bound aggregated as a root-sum-square over the N block rows:
// sqrt(N) * row bound instead of N * row bound.
double local_lipschitz_bound_rss(const Matrix& wq, const Matrix& wk, const Matrix& wv,
                                 int tokens, double anchor, double delta0);

// sqrt(sum_i ||block_i||_2^2) >= spectral norm of the horizontal concatenation.
double block_row_norm_bound(const std::vector<Matrix>& blocks);

struct EmpiricalLipschitz {
    double max_quotient = 0.0;           // max ||f(X1)-f(X2)||_F / ||X1-X2||_F
    double max_jacobian_norm = 0.0;      // max spectral norm of the full Jacobian at sampled points
};

// Sampled difference quotients over pairs in the Frobenius ball around x0 plus
// Jacobian spectral norms at sampled points (and at x0 itself). delta0 = 0
// degenerates to the Jacobian norm at x0.
EmpiricalLipschitz empirical_local_lipschitz(const Matrix& x0, const AttentionWeights& w, int head,
                                             double delta0, int samples, std::uint64_t seed,
                                             int jacobian_samples = 8);

// Sensitivity probe of an explicit affine map x -> Wx + b around x0:
// max over sampled perturbations of ||f(x0 + delta) - f(x0)||_2 / ||delta||_2,
// which collapses to ||W delta|| / ||delta|| and is capped by sigma_max(W).
double sensitivity_linearization_check(const Matrix& w_map, const Matrix& bias, const Matrix& x0,
                                       const std::vector<Matrix>& delta_samples);

}  // namespace specguard
