#include "specguard/lipschitz.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace specguard {

namespace {

double row_bound(const Matrix& wq, const Matrix& wk, const Matrix& wv,
                 int tokens, double anchor, double delta0) {
    if (delta0 < 0.0) throw ContractError("local_lipschitz_bound: delta0 must be >= 0");
    if (anchor < 0.0) throw ContractError("local_lipschitz_bound: anchor must be >= 0");
    if (tokens < 1) throw ContractError("local_lipschitz_bound: tokens must be >= 1");
    const double sq = spectral_norm(wq);
    const double sk = spectral_norm(transpose(wk));
    const double sv = spectral_norm(wv);
    const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
    const double radius = anchor + delta0;
    return (tokens + 1) * radius * radius * (sv * sq * sk * scale + sv);
}

}  // namespace

double local_lipschitz_bound(const Matrix& wq, const Matrix& wk, const Matrix& wv,
                             int tokens, double anchor, double delta0) {
    return tokens * row_bound(wq, wk, wv, tokens, anchor, delta0);
}

double local_lipschitz_bound(const AttentionWeights& w, int head, int tokens, double anchor, double delta0) {
    if (head < 0 || head >= w.n_heads) throw ContractError("local_lipschitz_bound: head out of range");
    return local_lipschitz_bound(w.wq[head], w.wk[head], w.wv[head], tokens, anchor, delta0);
}

double local_lipschitz_bound_rss(const Matrix& wq, const Matrix& wk, const Matrix& wv,
                                 int tokens, double anchor, double delta0) {
    return std::sqrt(static_cast<double>(tokens)) * row_bound(wq, wk, wv, tokens, anchor, delta0);
}

double block_row_norm_bound(const std::vector<Matrix>& blocks) {
    if (blocks.empty()) throw ContractError("block_row_norm_bound: empty block sequence");
    const int rows = blocks.front().rows();
    double s = 0.0;
    for (const Matrix& b : blocks) {
        if (b.rows() != rows) throw ShapeError("block_row_norm_bound: blocks must share row count");
        const double nb = spectral_norm(b);
        s += nb * nb;
    }
    return std::sqrt(s);
}

namespace {

Matrix sample_in_ball(const Matrix& x0, double delta0, Rng& rng) {
    // Uniform direction on the unit sphere of the vectorized space, radius
    // uniform in [0, delta0].
    Matrix x = x0;
    std::vector<real> dir = unit_sphere_vector(static_cast<int>(x0.size()), rng);
    const double radius = delta0 * rng.uniform();
    for (std::size_t k = 0; k < x.size(); ++k) x.raw()[k] += static_cast<real>(radius * dir[k]);
    return x;
}

}  // namespace

EmpiricalLipschitz empirical_local_lipschitz(const Matrix& x0, const AttentionWeights& w, int head,
                                             double delta0, int samples, std::uint64_t seed,
                                             int jacobian_samples) {
    if (samples < 1) throw ContractError("empirical_local_lipschitz: samples must be >= 1");
    if (delta0 < 0.0) throw ContractError("empirical_local_lipschitz: delta0 must be >= 0");

    EmpiricalLipschitz result;
    result.max_jacobian_norm = spectral_norm(attention_jacobian_full(x0, w, head));
    if (delta0 == 0.0) return result;

    Rng rng(seed);
    for (int s = 0; s < samples; ++s) {
        const Matrix x1 = sample_in_ball(x0, delta0, rng);
        const Matrix x2 = sample_in_ball(x0, delta0, rng);
        const Matrix diff = sub(x1, x2);
        const double denom = frobenius_norm(diff);
        if (denom == 0.0) continue;
        const Matrix y1 = attention_forward(x1, w, head).output;
        const Matrix y2 = attention_forward(x2, w, head).output;
        const double quotient = frobenius_norm(sub(y1, y2)) / denom;
        result.max_quotient = std::max(result.max_quotient, quotient);
    }
    for (int s = 0; s < jacobian_samples; ++s) {
        const Matrix xs = sample_in_ball(x0, delta0, rng);
        const double jn = spectral_norm(attention_jacobian_full(xs, w, head));
        result.max_jacobian_norm = std::max(result.max_jacobian_norm, jn);
    }
    return result;
}

double sensitivity_linearization_check(const Matrix& w_map, const Matrix& bias, const Matrix& x0,
                                       const std::vector<Matrix>& delta_samples) {
    if (x0.cols() != 1 || x0.rows() != w_map.cols())
        throw ShapeError("sensitivity_linearization_check: x0 must be a column of length " +
                         std::to_string(w_map.cols()));
    if (bias.cols() != 1 || bias.rows() != w_map.rows())
        throw ShapeError("sensitivity_linearization_check: bias must be a column of length " +
                         std::to_string(w_map.rows()));
    const Matrix f0 = add(matmul(w_map, x0), bias);
    double best = 0.0;
    for (const Matrix& delta : delta_samples) {
        if (delta.cols() != 1 || delta.rows() != w_map.cols())
            throw ShapeError("sensitivity_linearization_check: delta must be a column of length " +
                             std::to_string(w_map.cols()));
        const double dn = frobenius_norm(delta);
        if (dn == 0.0) continue;
        const Matrix f1 = add(matmul(w_map, add(x0, delta)), bias);
        best = std::max(best, frobenius_norm(sub(f1, f0)) / dn);
    }
    return best;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string LipschitzReport::to_text() const {
    std::ostringstream out;
    for (const LipschitzRecord& r : records) {
        out << "layer=" << r.layer << " head=" << r.head
            << " sigma_q=" << fmt(r.sigma_q) << " sigma_k=" << fmt(r.sigma_k)
            << " sigma_v=" << fmt(r.sigma_v)
            << " bound_input=" << fmt(r.bound_input) << " bound_b=" << fmt(r.bound_b)
            << " bound_input_rss=" << fmt(r.bound_input_rss)
            << " empirical_quotient=" << fmt(r.empirical_quotient)
            << " empirical_max_jacobian_norm=" << fmt(r.empirical_max_jacobian_norm)
            << " tokens=" << r.tokens << " anchor=" << fmt(r.anchor)
            << " B=" << fmt(r.b_used) << " delta0=" << fmt(r.delta0) << "\n";
    }
    return out.str();
}

std::string LipschitzReport::to_csv() const {
    std::ostringstream out;
    out << "layer,head,sigma_q,sigma_k,sigma_v,bound_input,bound_b,bound_input_rss,"
           "empirical_quotient,empirical_max_jacobian_norm,tokens,anchor,B,delta0\n";
    for (const LipschitzRecord& r : records) {
        out << r.layer << ',' << r.head << ',' << fmt(r.sigma_q) << ',' << fmt(r.sigma_k) << ','
            << fmt(r.sigma_v) << ',' << fmt(r.bound_input) << ',' << fmt(r.bound_b) << ','
            << fmt(r.bound_input_rss) << ',' << fmt(r.empirical_quotient) << ','
            << fmt(r.empirical_max_jacobian_norm) << ',' << r.tokens << ',' << fmt(r.anchor) << ','
            << fmt(r.b_used) << ',' << fmt(r.delta0) << "\n";
    }
    return out.str();
}

}  // namespace specguard
