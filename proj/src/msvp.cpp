#include "specguard/msvp.hpp"

namespace specguard {

Graph::Value msvp_loss(Graph& g, const std::vector<MsvpTerm>& terms, int iters_per_step) {
    if (iters_per_step < 1) throw ContractError("msvp_loss: iters_per_step must be >= 1");

    Graph::Value total = g.leaf(Matrix(1, 1));
    bool any = false;
    for (const MsvpTerm& term : terms) {
        const Matrix& w = g.value(term.weight);
        if (term.state == nullptr)
            throw ContractError("msvp_loss: missing power-iteration state for a penalized matrix");
        if (static_cast<int>(term.state->u.size()) != w.rows() ||
            static_cast<int>(term.state->v.size()) != w.cols())
            throw ContractError("msvp_loss: state shape does not match its matrix");
        if (term.lambda < 0.0) throw ContractError("msvp_loss: negative lambda");

        power_iteration(w, *term.state, iters_per_step);
        if (term.lambda == 0.0) continue;

        Matrix u_row(1, w.rows());
        for (int i = 0; i < w.rows(); ++i) u_row.at(0, i) = term.state->u[static_cast<std::size_t>(i)];
        Matrix v_col(w.cols(), 1);
        for (int i = 0; i < w.cols(); ++i) v_col.at(i, 0) = term.state->v[static_cast<std::size_t>(i)];

        const Graph::Value sigma = g.matmul(g.matmul(g.leaf(std::move(u_row)), term.weight),
                                            g.leaf(std::move(v_col)));
        const Graph::Value contribution = g.scale(g.square(sigma), term.lambda);
        total = any ? g.add(total, contribution) : contribution;
        any = true;
    }
    return total;
}

Graph::Value total_objective(Graph& g, Graph::Value cls_loss, Graph::Value msvp) {
    const Matrix& a = g.value(cls_loss);
    const Matrix& b = g.value(msvp);
    if (a.rows() != 1 || a.cols() != 1 || b.rows() != 1 || b.cols() != 1)
        throw ContractError("total_objective: both losses must be scalars");
    return g.add(cls_loss, msvp);
}

}  // namespace specguard
