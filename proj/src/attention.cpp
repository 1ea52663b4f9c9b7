#include "specguard/attention.hpp"

#include <cmath>
#include <string>

namespace specguard {

AttentionWeights AttentionWeights::random(int embed_dim, int head_dim, int n_heads, Rng& rng, double std_dev) {
    AttentionWeights w;
    w.embed_dim = embed_dim;
    w.head_dim = head_dim;
    w.n_heads = n_heads;
    for (int h = 0; h < n_heads; ++h) {
        w.wq.push_back(gaussian_matrix(embed_dim, head_dim, rng, std_dev));
        w.wk.push_back(gaussian_matrix(embed_dim, head_dim, rng, std_dev));
        w.wv.push_back(gaussian_matrix(embed_dim, head_dim, rng, std_dev));
    }
    w.wo = gaussian_matrix(n_heads * head_dim, embed_dim, rng, std_dev);
    return w;
}

void AttentionWeights::validate() const {
    if (static_cast<int>(wq.size()) != n_heads || static_cast<int>(wk.size()) != n_heads ||
        static_cast<int>(wv.size()) != n_heads)
        throw ShapeError("AttentionWeights: head count mismatch");
    for (int h = 0; h < n_heads; ++h) {
        for (const Matrix* m : {&wq[h], &wk[h], &wv[h]}) {
            if (m->rows() != embed_dim || m->cols() != head_dim)
                throw ShapeError("AttentionWeights: head " + std::to_string(h) + " expects " +
                                 std::to_string(embed_dim) + "x" + std::to_string(head_dim) +
                                 ", got " + shape_string(*m));
        }
    }
    if (wo.size() > 0 && (wo.rows() != n_heads * head_dim || wo.cols() != embed_dim))
        throw ShapeError("AttentionWeights: wo shape " + shape_string(wo));
}

namespace {

void check_head(const AttentionWeights& w, int head) {
    if (head < 0 || head >= w.n_heads)
        throw ContractError("attention: head index " + std::to_string(head) + " out of range");
}

Matrix row_softmax_plain(const Matrix& scores) {
    Matrix p(scores.rows(), scores.cols());
    for (int i = 0; i < scores.rows(); ++i) {
        double mx = -1e300;
        for (int j = 0; j < scores.cols(); ++j) mx = std::max(mx, static_cast<double>(scores.at(i, j)));
        double denom = 0.0;
        for (int j = 0; j < scores.cols(); ++j) {
            const double e = std::exp(static_cast<double>(scores.at(i, j)) - mx);
            p.at(i, j) = static_cast<real>(e);
            denom += e;
        }
        for (int j = 0; j < scores.cols(); ++j) p.at(i, j) = static_cast<real>(p.at(i, j) / denom);
    }
    return p;
}

}  // namespace

AttentionTrace attention_forward_head(const Matrix& x, const Matrix& wq, const Matrix& wk, const Matrix& wv) {
    if (x.cols() != wq.rows() || x.cols() != wk.rows() || x.cols() != wv.rows())
        throw ShapeError("attention_forward: X cols " + std::to_string(x.cols()) + " vs weight rows");
    const int head_dim = wq.cols();
    AttentionTrace t;
    const Matrix q = matmul(x, wq);
    const Matrix k = matmul(x, wk);
    t.scores = scale(matmul(q, transpose(k)), static_cast<real>(1.0 / std::sqrt(static_cast<double>(head_dim))));
    t.p = row_softmax_plain(t.scores);
    t.output = matmul(t.p, matmul(x, wv));
    return t;
}

AttentionTrace attention_forward(const Matrix& x, const AttentionWeights& w, int head) {
    check_head(w, head);
    return attention_forward_head(x, w.wq[head], w.wk[head], w.wv[head]);
}

Matrix softmax_row_jacobian(const std::vector<real>& p) {
    const int n = static_cast<int>(p.size());
    double sum = 0.0;
    for (real v : p) {
        if (v < real(0)) throw ContractError("softmax_row_jacobian: negative probability");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ContractError("softmax_row_jacobian: row sums to " + std::to_string(sum));
    Matrix j(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            j.at(a, b) = (a == b ? p[static_cast<std::size_t>(a)] : real(0)) -
                         p[static_cast<std::size_t>(a)] * p[static_cast<std::size_t>(b)];
    return j;
}

Matrix attention_jacobian_block(const Matrix& x, const AttentionWeights& w, int head, int i, int j) {
    check_head(w, head);
    const int n = x.rows();
    if (i < 0 || i >= n || j < 0 || j >= n)
        throw ContractError("attention_jacobian_block: index out of range");

    const Matrix& wq = w.wq[head];
    const Matrix& wk = w.wk[head];
    const Matrix& wv = w.wv[head];
    const Matrix a = scale(matmul(wq, transpose(wk)),
                           static_cast<real>(1.0 / std::sqrt(static_cast<double>(w.head_dim))));

    const AttentionTrace trace = attention_forward_head(x, wq, wk, wv);
    std::vector<real> p_row(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) p_row[static_cast<std::size_t>(c)] = trace.p.at(i, c);
    const Matrix p_i = softmax_row_jacobian(p_row);

    // Scores row i is q_k = x_i^T A x_k, so dq/dx_j = E_ji X A + delta_ij X A^T
    // with E_ji placing row i of X into row j. The transposed-score
    // convention would mirror A and A^T; finite differences anchor this one.
    Matrix dq(n, x.cols());
    {
        const Matrix xa = matmul(x, a);
        for (int c = 0; c < x.cols(); ++c) dq.at(j, c) = xa.at(i, c);
    }
    if (i == j) dq = add(dq, matmul(x, transpose(a)));

    Matrix inner = matmul(transpose(x), matmul(p_i, dq));  // d x d
    for (int c = 0; c < x.cols(); ++c) inner.at(c, c) += trace.p.at(i, j);
    return matmul(transpose(wv), inner);  // head_dim x d
}

Matrix attention_jacobian_full(const Matrix& x, const AttentionWeights& w, int head) {
    check_head(w, head);
    const int n = x.rows();
    const int d = x.cols();
    const int hd = w.head_dim;

    const Matrix& wv = w.wv[head];
    const Matrix a = scale(matmul(w.wq[head], transpose(w.wk[head])),
                           static_cast<real>(1.0 / std::sqrt(static_cast<double>(hd))));
    const AttentionTrace trace = attention_forward_head(x, w.wq[head], w.wk[head], wv);
    const Matrix wvt = transpose(wv);
    const Matrix xt = transpose(x);
    const Matrix xa = matmul(x, a);
    const Matrix xat = matmul(x, transpose(a));

    // P^(i) E_ji collapses to an outer product: (X^T P^(i))_{:,j} (X A)_{i,:},
    // so each block costs O(d^2) after the per-row factors are in place.
    Matrix full(n * hd, n * d);
    std::vector<real> p_row(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < n; ++c) p_row[static_cast<std::size_t>(c)] = trace.p.at(i, c);
        const Matrix p_i = softmax_row_jacobian(p_row);
        const Matrix xtp = matmul(xt, p_i);                  // d x n
        const Matrix diag_term = matmul(xtp, xat);           // d x d, only block (i,i)
        for (int j = 0; j < n; ++j) {
            Matrix inner(d, d);
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) inner.at(r, c) = xtp.at(r, j) * xa.at(i, c);
            if (i == j) inner = add(inner, diag_term);
            for (int c = 0; c < d; ++c) inner.at(c, c) += trace.p.at(i, j);
            const Matrix block = matmul(wvt, inner);
            for (int r = 0; r < hd; ++r)
                for (int c = 0; c < d; ++c) full.at(i * hd + r, j * d + c) = block.at(r, c);
        }
    }
    return full;
}

}  // namespace specguard
