#pragma once

#include <vector>

#include "specguard/autograd.hpp"
#include "specguard/matrix.hpp"

namespace specguard {

struct MsvpConfig {
    double lambda_q = 1e-4;
    double lambda_k = 1e-4;
    double lambda_v = 1e-4;
    int iters_per_step = 1;
    bool enabled = true;

    bool all_zero() const { return lambda_q == 0.0 && lambda_k == 0.0 && lambda_v == 0.0; }
    void validate() const {
        if (lambda_q < 0.0 || lambda_k < 0.0 || lambda_v < 0.0)
            throw ContractError("MsvpConfig: lambdas must be non-negative");
        if (iters_per_step < 1) throw ContractError("MsvpConfig: iters_per_step must be >= 1");
    }
};

// One penalized matrix: the weight's graph node, its persisted approximation
// vectors, and the lambda applied to sigma^2.
struct MsvpTerm {
    Graph::Value weight;
    PowerIterState* state = nullptr;
    double lambda = 0.0;
};

// Runs iters_per_step power iterations per matrix (updating the states in
// place), then adds lambda * sigma^2 per matrix with sigma rebuilt inside the
// graph as u^T W v over the refreshed, detached vectors. The gradient of each
// term w.r.t. its matrix is therefore 2 * lambda * sigma * u v^T. Terms with
// lambda == 0 still refresh their state but contribute no graph nodes, so a
// zero-lambda run is bit-identical to a disabled one.
Graph::Value msvp_loss(Graph& g, const std::vector<MsvpTerm>& terms, int iters_per_step);

// cls + msvp; both scalars, both reached by backward.
Graph::Value total_objective(Graph& g, Graph::Value cls_loss, Graph::Value msvp);

}  // namespace specguard
