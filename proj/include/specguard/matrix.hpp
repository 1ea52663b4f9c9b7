#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "specguard/common.hpp"

namespace specguard {

// Dense row-major matrix. Entries must stay finite; construction and every
// kernel in matrix.cpp verify this.
class Matrix {
  public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols), d_(checked_size(rows, cols), real(0)) {}
    Matrix(int rows, int cols, std::vector<real> data);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return d_.size(); }

    real& at(int i, int j) { return d_[static_cast<std::size_t>(i) * cols_ + j]; }
    real at(int i, int j) const { return d_[static_cast<std::size_t>(i) * cols_ + j]; }

    real* data() { return d_.data(); }
    const real* data() const { return d_.data(); }
    std::vector<real>& raw() { return d_; }
    const std::vector<real>& raw() const { return d_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    void ensure_finite(const char* where) const;

    static Matrix identity(int n);
    static Matrix zeros(int rows, int cols) { return Matrix(rows, cols); }
    static Matrix diag(const std::vector<real>& entries);

  private:
    static std::size_t checked_size(int rows, int cols);

    int rows_ = 0;
    int cols_ = 0;
    std::vector<real> d_;
};

// Persisted approximation vectors for one penalized matrix. u has the row
// count of the matrix, v the column count; both are kept at unit norm.
struct PowerIterState {
    std::vector<real> u;
    std::vector<real> v;
    double sigma = 0.0;
};

// Unit-norm vectors from a seeded uniform sphere sampler.
PowerIterState init_power_state(int rows, int cols, Rng& rng);

// One or more v <- A^T u, u <- A v rounds with explicit renormalization;
// returns sigma = u^T A v and leaves the updated vectors in `state`. An
// all-zero matrix yields sigma = 0 with the state untouched.
double power_iteration(const Matrix& a, PowerIterState& state, int iters);

// All min(m, n) singular values, descending, via cyclic Jacobi rotations on
// the Gram matrix. Desk-scale only: min(m, n) <= 256.
std::vector<double> svd_oracle(const Matrix& a);

// Singular values plus the matching right-singular vectors (columns of v).
struct SvdResult {
    std::vector<double> values;  // descending
    Matrix right_vectors;        // n x k, column j pairs with values[j]
};
SvdResult svd_oracle_full(const Matrix& a);

double spectral_norm(const Matrix& a);
double frobenius_norm(const Matrix& a);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, real s);

// u v^T for column vectors u (m) and v (n).
Matrix outer(const std::vector<real>& u, const std::vector<real>& v);

double dot(const std::vector<real>& a, const std::vector<real>& b);
double norm2(const std::vector<real>& a);

std::vector<real> unit_sphere_vector(int n, Rng& rng);
Matrix gaussian_matrix(int rows, int cols, Rng& rng, double std_dev = 1.0);
// Random orthogonal matrix (Gram-Schmidt on a Gaussian draw).
Matrix random_orthogonal(int n, Rng& rng);

std::string shape_string(const Matrix& a);

}  // namespace specguard
