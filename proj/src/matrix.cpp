#include "specguard/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace specguard {

std::size_t Matrix::checked_size(int rows, int cols) {
    if (rows < 0 || cols < 0) throw ShapeError("matrix dimensions must be non-negative");
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
}

Matrix::Matrix(int rows, int cols, std::vector<real> data)
    : rows_(rows), cols_(cols), d_(std::move(data)) {
    if (d_.size() != checked_size(rows, cols))
        throw ShapeError("matrix data length " + std::to_string(d_.size()) + " does not match " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    ensure_finite("Matrix(data)");
}

void Matrix::ensure_finite(const char* where) const {
    for (real x : d_) {
        if (!std::isfinite(static_cast<double>(x)))
            throw ContractError(std::string("non-finite entry in ") + where);
    }
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = real(1);
    return m;
}

Matrix Matrix::diag(const std::vector<real>& entries) {
    const int n = static_cast<int>(entries.size());
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = entries[i];
    return m;
}

std::string shape_string(const Matrix& a) {
    return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

double dot(const std::vector<real>& a, const std::vector<real>& b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

double norm2(const std::vector<real>& a) { return std::sqrt(dot(a, a)); }

std::vector<real> unit_sphere_vector(int n, Rng& rng) {
    std::vector<real> v(static_cast<std::size_t>(n));
    double nrm = 0.0;
    do {
        for (auto& x : v) x = static_cast<real>(rng.normal());
        nrm = norm2(v);
    } while (nrm == 0.0);
    for (auto& x : v) x = static_cast<real>(x / nrm);
    return v;
}

Matrix gaussian_matrix(int rows, int cols, Rng& rng, double std_dev) {
    Matrix m(rows, cols);
    for (auto& x : m.raw()) x = static_cast<real>(std_dev * rng.normal());
    return m;
}

Matrix random_orthogonal(int n, Rng& rng) {
    // Modified Gram-Schmidt columns of a Gaussian draw.
    Matrix g = gaussian_matrix(n, n, rng);
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < j; ++k) {
            double proj = 0.0;
            for (int i = 0; i < n; ++i) proj += static_cast<double>(g.at(i, k)) * g.at(i, j);
            for (int i = 0; i < n; ++i) g.at(i, j) -= static_cast<real>(proj) * g.at(i, k);
        }
        double nrm = 0.0;
        for (int i = 0; i < n; ++i) nrm += static_cast<double>(g.at(i, j)) * g.at(i, j);
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) throw ContractError("random_orthogonal: degenerate draw");
        for (int i = 0; i < n; ++i) g.at(i, j) = static_cast<real>(g.at(i, j) / nrm);
    }
    return g;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + shape_string(a) + " * " + shape_string(b));
    Matrix c(a.rows(), b.cols());
    const int m = a.rows(), k = a.cols(), n = b.cols();
    for (int i = 0; i < m; ++i) {
        real* ci = c.data() + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const real aip = a.at(i, p);
            const real* bp = b.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    c.ensure_finite("matmul");
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("add: " + shape_string(a) + " vs " + shape_string(b));
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.raw()[i] += b.raw()[i];
    c.ensure_finite("add");
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("sub: " + shape_string(a) + " vs " + shape_string(b));
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.raw()[i] -= b.raw()[i];
    c.ensure_finite("sub");
    return c;
}

Matrix scale(const Matrix& a, real s) {
    Matrix c = a;
    for (auto& x : c.raw()) x *= s;
    c.ensure_finite("scale");
    return c;
}

Matrix outer(const std::vector<real>& u, const std::vector<real>& v) {
    Matrix c(static_cast<int>(u.size()), static_cast<int>(v.size()));
    for (int i = 0; i < c.rows(); ++i)
        for (int j = 0; j < c.cols(); ++j) c.at(i, j) = u[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(j)];
    c.ensure_finite("outer");
    return c;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (real x : a.raw()) s += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(s);
}

PowerIterState init_power_state(int rows, int cols, Rng& rng) {
    PowerIterState st;
    st.u = unit_sphere_vector(rows, rng);
    st.v = unit_sphere_vector(cols, rng);
    st.sigma = 0.0;
    return st;
}

double power_iteration(const Matrix& a, PowerIterState& state, int iters) {
    if (iters < 1) throw ContractError("power_iteration: iters must be >= 1");
    if (static_cast<int>(state.u.size()) != a.rows() || static_cast<int>(state.v.size()) != a.cols())
        throw ShapeError("power_iteration: state vectors do not match " + shape_string(a));

    const int m = a.rows(), n = a.cols();
    std::vector<real> u = state.u, v(static_cast<std::size_t>(n));
    double sigma = 0.0;
    for (int it = 0; it < iters; ++it) {
        // v <- A^T u
        std::fill(v.begin(), v.end(), real(0));
        for (int i = 0; i < m; ++i) {
            const real ui = u[static_cast<std::size_t>(i)];
            const real* ai = a.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(j)] += ai[j] * ui;
        }
        const double vn = norm2(v);
        if (vn == 0.0) {
            // u is orthogonal to the range (in particular: A == 0); report 0,
            // leave the persisted vectors alone.
            return 0.0;
        }
        for (auto& x : v) x = static_cast<real>(x / vn);
        // u <- A v
        std::fill(u.begin(), u.end(), real(0));
        for (int i = 0; i < m; ++i) {
            const real* ai = a.data() + static_cast<std::size_t>(i) * n;
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += static_cast<double>(ai[j]) * v[static_cast<std::size_t>(j)];
            u[static_cast<std::size_t>(i)] = static_cast<real>(s);
        }
        const double un = norm2(u);
        if (un == 0.0) return 0.0;
        for (auto& x : u) x = static_cast<real>(x / un);
        sigma = un;  // u^T A v with both renormalized
    }
    state.u = std::move(u);
    state.v = std::move(v);
    state.sigma = sigma;
    return sigma;
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix; returns eigenvalues
// in-place on the diagonal of s and accumulates rotations into vecs when
// requested.
void jacobi_symmetric(Matrix& s, Matrix* vecs) {
    const int n = s.rows();
    if (vecs) *vecs = Matrix::identity(n);
    if (n <= 1) return;

    double off = 0.0, total = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double x = s.at(i, j);
            total += x * x;
            if (i != j) off += x * x;
        }
    const double tol = std::numeric_limits<double>::epsilon() * std::max(total, 1e-300);

    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps && off > tol; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = s.at(p, q);
                if (apq == 0.0) continue;
                const double app = s.at(p, p);
                const double aqq = s.at(q, q);
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = t * c;
                for (int k = 0; k < n; ++k) {
                    const double skp = s.at(k, p), skq = s.at(k, q);
                    s.at(k, p) = static_cast<real>(c * skp - sn * skq);
                    s.at(k, q) = static_cast<real>(sn * skp + c * skq);
                }
                for (int k = 0; k < n; ++k) {
                    const double spk = s.at(p, k), sqk = s.at(q, k);
                    s.at(p, k) = static_cast<real>(c * spk - sn * sqk);
                    s.at(q, k) = static_cast<real>(sn * spk + c * sqk);
                }
                if (vecs) {
                    for (int k = 0; k < n; ++k) {
                        const double vkp = vecs->at(k, p), vkq = vecs->at(k, q);
                        vecs->at(k, p) = static_cast<real>(c * vkp - sn * vkq);
                        vecs->at(k, q) = static_cast<real>(sn * vkp + c * vkq);
                    }
                }
            }
        }
        off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) off += static_cast<double>(s.at(i, j)) * s.at(i, j);
    }
}

SvdResult svd_via_gram(const Matrix& a, bool want_vectors) {
    const int m = a.rows(), n = a.cols();
    const int k = std::min(m, n);
    if (k > 256) throw ShapeError("svd_oracle: min dimension " + std::to_string(k) + " exceeds desk-scale cap 256");
    if (k == 0) return {{}, Matrix()};

    // Work on the smaller Gram matrix; right vectors come from A^T A, so when
    // we use A A^T (m < n) we recover them via v = A^T u / sigma.
    const bool use_ata = n <= m;
    Matrix g = use_ata ? matmul(transpose(a), a) : matmul(a, transpose(a));
    // Symmetrize away roundoff.
    for (int i = 0; i < g.rows(); ++i)
        for (int j = i + 1; j < g.cols(); ++j) {
            const real avg = static_cast<real>((static_cast<double>(g.at(i, j)) + g.at(j, i)) / 2.0);
            g.at(i, j) = avg;
            g.at(j, i) = avg;
        }

    Matrix vecs;
    jacobi_symmetric(g, want_vectors ? &vecs : nullptr);

    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return static_cast<double>(g.at(x, x)) > static_cast<double>(g.at(y, y)); });

    SvdResult out;
    out.values.reserve(static_cast<std::size_t>(k));
    for (int idx : order) out.values.push_back(std::sqrt(std::max(0.0, static_cast<double>(g.at(idx, idx)))));

    if (want_vectors) {
        out.right_vectors = Matrix(n, k);
        for (int col = 0; col < k; ++col) {
            const int idx = order[static_cast<std::size_t>(col)];
            if (use_ata) {
                for (int i = 0; i < n; ++i) out.right_vectors.at(i, col) = vecs.at(i, idx);
            } else {
                // Eigenvector of A A^T; map to the right space.
                std::vector<real> u(static_cast<std::size_t>(m));
                for (int i = 0; i < m; ++i) u[static_cast<std::size_t>(i)] = vecs.at(i, idx);
                std::vector<real> v(static_cast<std::size_t>(n), real(0));
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(j)] += a.at(i, j) * u[static_cast<std::size_t>(i)];
                const double nrm = norm2(v);
                if (nrm > 0.0)
                    for (auto& x : v) x = static_cast<real>(x / nrm);
                for (int i = 0; i < n; ++i) out.right_vectors.at(i, col) = v[static_cast<std::size_t>(i)];
            }
        }
    }
    return out;
}

}  // namespace

std::vector<double> svd_oracle(const Matrix& a) { return svd_via_gram(a, false).values; }

SvdResult svd_oracle_full(const Matrix& a) { return svd_via_gram(a, true); }

double spectral_norm(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0) return 0.0;
    if (std::min(a.rows(), a.cols()) <= 256) return svd_oracle(a)[0];
    Rng rng(0x5eccf0071ull);
    PowerIterState st = init_power_state(a.rows(), a.cols(), rng);
    // The per-round change underestimates the remaining error when the gap is
    // tight, so demand a much smaller change over several rounds.
    double prev = 0.0;
    int stable = 0;
    for (int round = 0; round < 200000; ++round) {
        const double cur = power_iteration(a, st, 1);
        if (cur == 0.0) return 0.0;
        stable = (round > 2 && std::abs(cur - prev) <= 1e-12 * cur) ? stable + 1 : 0;
        if (stable >= 3) return cur;
        prev = cur;
    }
    return prev;
}

}  // namespace specguard
