#pragma once

#include <vector>

#include "specguard/matrix.hpp"

namespace specguard {

// Per-head projection weights for one attention layer. Heads keep separate
// d x head_dim matrices; wo maps the concatenated heads back to d.
struct AttentionWeights {
    int embed_dim = 0;
    int head_dim = 0;
    int n_heads = 0;
    std::vector<Matrix> wq;  // per head, embed_dim x head_dim
    std::vector<Matrix> wk;
    std::vector<Matrix> wv;
    Matrix wo;               // (n_heads * head_dim) x embed_dim

    static AttentionWeights random(int embed_dim, int head_dim, int n_heads, Rng& rng, double std_dev = 0.5);
    void validate() const;
};

struct AttentionTrace {
    Matrix scores;  // N x N, pre-softmax
    Matrix p;       // N x N, row-stochastic
    Matrix output;  // N x head_dim
};

// Single-head forward: scores = (X Wq)(X Wk)^T / sqrt(head_dim),
// P = row_softmax(scores), output = P X Wv.
AttentionTrace attention_forward(const Matrix& x, const AttentionWeights& w, int head);
AttentionTrace attention_forward_head(const Matrix& x, const Matrix& wq, const Matrix& wk, const Matrix& wv);

// diag(p) - p p^T for one softmax row; symmetric PSD with zero row sums.
Matrix softmax_row_jacobian(const std::vector<real>& p);

// J_ij = d f_i^T / d x_j in R^{head_dim x d} with
// J_ij = Wv^T (X^T P^(i) (E_ji X A^T + delta_ij X A) + P_ij I),
// A = Wq Wk^T / sqrt(head_dim). Validated against finite differences.
Matrix attention_jacobian_block(const Matrix& x, const AttentionWeights& w, int head, int i, int j);

// All N^2 blocks assembled in row-major block order: (N * head_dim) x (N * d).
Matrix attention_jacobian_full(const Matrix& x, const AttentionWeights& w, int head);

}  // namespace specguard
