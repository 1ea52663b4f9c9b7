#pragma once

#include <string>
#include <vector>

#include "specguard/attention.hpp"
#include "specguard/matrix.hpp"

namespace specguard {

struct SuiteResult {
    std::string name;
    bool passed = false;
    double max_error = 0.0;
    double seconds = 0.0;
    std::string detail;
};

// Finite-difference Jacobian of single-head attention w.r.t. X, laid out in
// the same (N*head_dim) x (N*d) block order as attention_jacobian_full.
Matrix attention_jacobian_fd(const Matrix& x, const AttentionWeights& w, int head, double h = 1e-5);

// Converged-estimate accuracy against the SVD oracle plus the geometric
// decay-rate fit on strictly gapped matrices.
SuiteResult power_iteration_suite(int matrices = 100, int iters = 200, double tol = 1e-9);

// Analytic attention Jacobian vs central finite differences.
SuiteResult jacobian_suite(int configs = 50, double tol = 1e-6);

// Sampled difference quotients and Jacobian norms must stay under the
// input-anchored bound; zero violations allowed.
SuiteResult bound_containment_suite(int configs = 200, int samples = 1000);

// Per-op finite-difference gradient checks; names the offending op on
// failure.
SuiteResult autograd_suite(int inputs_per_op = 20, double tol = 1e-6);

// Projection and attack-contract checks (idempotency, ball containment,
// fgsm/pgd agreement at one step).
SuiteResult projection_suite();

std::vector<std::string> verification_suite_names();
// `which` empty -> contract error; the single entry "all" expands.
std::vector<SuiteResult> run_verification_suites(const std::vector<std::string>& which);
std::string verification_report(const std::vector<SuiteResult>& results);
bool all_passed(const std::vector<SuiteResult>& results);

}  // namespace specguard
