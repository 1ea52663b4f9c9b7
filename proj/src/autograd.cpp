#include "specguard/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace specguard {

namespace testhook {
Op corrupted_backward = Op::Leaf;
bool corrupt_enabled = false;
void corrupt_backward_rule(Op op) {
    corrupted_backward = op;
    corrupt_enabled = true;
}
void clear_corruption() { corrupt_enabled = false; }
}  // namespace testhook

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Scale: return "scale";
        case Op::Transpose: return "transpose";
        case Op::RowSoftmax: return "row_softmax";
        case Op::LayerNorm: return "layer_norm";
        case Op::Gelu: return "gelu";
        case Op::MeanPool: return "mean_pool";
        case Op::CrossEntropy: return "cross_entropy";
        case Op::AddRowVec: return "add_rowvec";
        case Op::ConcatCols: return "concat_cols";
        case Op::ConcatRows: return "concat_rows";
        case Op::Square: return "square";
        case Op::Sum: return "sum";
        case Op::Reorder: return "reorder";
    }
    return "?";
}

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Graph::Node& Graph::node(Value v) {
    if (v.idx < 0 || v.idx >= static_cast<int>(nodes_.size()))
        throw ContractError("invalid graph value handle");
    return nodes_[static_cast<std::size_t>(v.idx)];
}

const Graph::Node& Graph::node(Value v) const {
    if (v.idx < 0 || v.idx >= static_cast<int>(nodes_.size()))
        throw ContractError("invalid graph value handle");
    return nodes_[static_cast<std::size_t>(v.idx)];
}

const Matrix& Graph::value(Value v) const { return node(v).value; }

bool Graph::has_grad(Value v) const { return node(v).grad_set; }

const Matrix& Graph::grad(Value v) const {
    const Node& n = node(v);
    if (!n.grad_set) throw ContractError("gradient not populated; run backward first");
    return n.grad;
}

Graph::Value Graph::leaf(Matrix v) {
    v.ensure_finite("leaf");
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(v);
    return {push(std::move(n))};
}

Graph::Value Graph::matmul(Value a, Value b) {
    Node n;
    n.op = Op::MatMul;
    n.value = specguard::matmul(node(a).value, node(b).value);
    n.parents = {a.idx, b.idx};
    return {push(std::move(n))};
}

Graph::Value Graph::add(Value a, Value b) {
    Node n;
    n.op = Op::Add;
    n.value = specguard::add(node(a).value, node(b).value);
    n.parents = {a.idx, b.idx};
    return {push(std::move(n))};
}

Graph::Value Graph::scale(Value a, double s) {
    Node n;
    n.op = Op::Scale;
    n.value = specguard::scale(node(a).value, static_cast<real>(s));
    n.parents = {a.idx};
    n.aux = s;
    return {push(std::move(n))};
}

Graph::Value Graph::transpose(Value a) {
    Node n;
    n.op = Op::Transpose;
    n.value = specguard::transpose(node(a).value);
    n.parents = {a.idx};
    return {push(std::move(n))};
}

Graph::Value Graph::row_softmax(Value a) {
    const Matrix& x = node(a).value;
    Matrix y(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
        double mx = -1e300;
        for (int j = 0; j < x.cols(); ++j) mx = std::max(mx, static_cast<double>(x.at(i, j)));
        double denom = 0.0;
        for (int j = 0; j < x.cols(); ++j) {
            const double e = std::exp(static_cast<double>(x.at(i, j)) - mx);
            y.at(i, j) = static_cast<real>(e);
            denom += e;
        }
        for (int j = 0; j < x.cols(); ++j) y.at(i, j) = static_cast<real>(y.at(i, j) / denom);
    }
    y.ensure_finite("row_softmax");
    Node n;
    n.op = Op::RowSoftmax;
    n.value = std::move(y);
    n.parents = {a.idx};
    return {push(std::move(n))};
}

Graph::Value Graph::layer_norm(Value x, Value gain, Value bias, double eps) {
    const Matrix& xv = node(x).value;
    const Matrix& g = node(gain).value;
    const Matrix& b = node(bias).value;
    const int rows = xv.rows(), cols = xv.cols();
    if (g.rows() != 1 || g.cols() != cols || b.rows() != 1 || b.cols() != cols)
        throw ShapeError("layer_norm: gain/bias must be 1x" + std::to_string(cols));
    Matrix y(rows, cols), xhat(rows, cols), inv_std(rows, 1);
    for (int i = 0; i < rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += xv.at(i, j);
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double dxx = static_cast<double>(xv.at(i, j)) - mean;
            var += dxx * dxx;
        }
        var /= cols;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std.at(i, 0) = static_cast<real>(inv);
        for (int j = 0; j < cols; ++j) {
            const double xh = (static_cast<double>(xv.at(i, j)) - mean) * inv;
            xhat.at(i, j) = static_cast<real>(xh);
            y.at(i, j) = static_cast<real>(xh * g.at(0, j) + b.at(0, j));
        }
    }
    y.ensure_finite("layer_norm");
    Node n;
    n.op = Op::LayerNorm;
    n.value = std::move(y);
    n.parents = {x.idx, gain.idx, bias.idx};
    n.aux = eps;
    n.cache = std::move(xhat);
    n.cache2 = std::move(inv_std);
    return {push(std::move(n))};
}

Graph::Value Graph::gelu(Value a) {
    const Matrix& x = node(a).value;
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.raw()[i];
        y.raw()[i] = static_cast<real>(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))));
    }
    y.ensure_finite("gelu");
    Node n;
    n.op = Op::Gelu;
    n.value = std::move(y);
    n.parents = {a.idx};
    return {push(std::move(n))};
}

Graph::Value Graph::mean_pool(Value a) {
    const Matrix& x = node(a).value;
    Matrix y(1, x.cols());
    for (int j = 0; j < x.cols(); ++j) {
        double s = 0.0;
        for (int i = 0; i < x.rows(); ++i) s += x.at(i, j);
        y.at(0, j) = static_cast<real>(s / x.rows());
    }
    Node n;
    n.op = Op::MeanPool;
    n.value = std::move(y);
    n.parents = {a.idx};
    return {push(std::move(n))};
}

Graph::Value Graph::cross_entropy(Value logits, const std::vector<int>& labels) {
    const Matrix& z = node(logits).value;
    if (static_cast<int>(labels.size()) != z.rows())
        throw ShapeError("cross_entropy: need one label per logits row");
    for (int lab : labels)
        if (lab < 0 || lab >= z.cols())
            throw ContractError("cross_entropy: label " + std::to_string(lab) + " out of range [0," +
                                std::to_string(z.cols()) + ")");
    Matrix probs(z.rows(), z.cols());
    double loss = 0.0;
    for (int i = 0; i < z.rows(); ++i) {
        double mx = -1e300;
        for (int j = 0; j < z.cols(); ++j) mx = std::max(mx, static_cast<double>(z.at(i, j)));
        double denom = 0.0;
        for (int j = 0; j < z.cols(); ++j) denom += std::exp(static_cast<double>(z.at(i, j)) - mx);
        const double lse = mx + std::log(denom);
        loss += lse - static_cast<double>(z.at(i, labels[static_cast<std::size_t>(i)]));
        for (int j = 0; j < z.cols(); ++j)
            probs.at(i, j) = static_cast<real>(std::exp(static_cast<double>(z.at(i, j)) - lse));
    }
    loss /= z.rows();
    Node n;
    n.op = Op::CrossEntropy;
    n.value = Matrix(1, 1, {static_cast<real>(loss)});
    n.parents = {logits.idx};
    n.idx = labels;
    n.cache = std::move(probs);
    return {push(std::move(n))};
}

Graph::Value Graph::add_rowvec(Value a, Value row) {
    const Matrix& x = node(a).value;
    const Matrix& r = node(row).value;
    if (r.rows() != 1 || r.cols() != x.cols())
        throw ShapeError("add_rowvec: row must be 1x" + std::to_string(x.cols()));
    Matrix y = x;
    for (int i = 0; i < y.rows(); ++i)
        for (int j = 0; j < y.cols(); ++j) y.at(i, j) += r.at(0, j);
    y.ensure_finite("add_rowvec");
    Node n;
    n.op = Op::AddRowVec;
    n.value = std::move(y);
    n.parents = {a.idx, row.idx};
    return {push(std::move(n))};
}

Graph::Value Graph::concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty part list");
    const int rows = node(parts[0]).value.rows();
    int cols = 0;
    for (Value p : parts) {
        if (node(p).value.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
        cols += node(p).value.cols();
    }
    Matrix y(rows, cols);
    int off = 0;
    for (Value p : parts) {
        const Matrix& m = node(p).value;
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < m.cols(); ++j) y.at(i, off + j) = m.at(i, j);
        off += m.cols();
    }
    Node n;
    n.op = Op::ConcatCols;
    n.value = std::move(y);
    n.parents.reserve(parts.size());
    for (Value p : parts) n.parents.push_back(p.idx);
    return {push(std::move(n))};
}

Graph::Value Graph::concat_rows(const std::vector<Value>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty part list");
    const int cols = node(parts[0]).value.cols();
    int rows = 0;
    for (Value p : parts) {
        if (node(p).value.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
        rows += node(p).value.rows();
    }
    Matrix y(rows, cols);
    int off = 0;
    for (Value p : parts) {
        const Matrix& m = node(p).value;
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < cols; ++j) y.at(off + i, j) = m.at(i, j);
        off += m.rows();
    }
    Node n;
    n.op = Op::ConcatRows;
    n.value = std::move(y);
    n.parents.reserve(parts.size());
    for (Value p : parts) n.parents.push_back(p.idx);
    return {push(std::move(n))};
}

Graph::Value Graph::square(Value a) {
    const Matrix& x = node(a).value;
    Matrix y = x;
    for (auto& v : y.raw()) v *= v;
    y.ensure_finite("square");
    Node n;
    n.op = Op::Square;
    n.value = std::move(y);
    n.parents = {a.idx};
    return {push(std::move(n))};
}

Graph::Value Graph::sum(Value a) {
    const Matrix& x = node(a).value;
    double s = 0.0;
    for (real v : x.raw()) s += v;
    Node n;
    n.op = Op::Sum;
    n.value = Matrix(1, 1, {static_cast<real>(s)});
    n.parents = {a.idx};
    return {push(std::move(n))};
}

Graph::Value Graph::reorder(Value a, std::vector<int> index_map, int out_rows, int out_cols) {
    const Matrix& x = node(a).value;
    if (static_cast<std::size_t>(out_rows) * static_cast<std::size_t>(out_cols) != index_map.size())
        throw ShapeError("reorder: index map does not match output shape");
    Matrix y(out_rows, out_cols);
    for (std::size_t k = 0; k < index_map.size(); ++k) {
        const int src = index_map[k];
        if (src < 0 || static_cast<std::size_t>(src) >= x.size())
            throw ContractError("reorder: index out of range");
        y.raw()[k] = x.raw()[static_cast<std::size_t>(src)];
    }
    Node n;
    n.op = Op::Reorder;
    n.value = std::move(y);
    n.parents = {a.idx};
    n.idx = std::move(index_map);
    return {push(std::move(n))};
}

void Graph::accumulate(int target, const Matrix& contribution, Op source_op) {
    Node& t = nodes_[static_cast<std::size_t>(target)];
    Matrix c = contribution;
    if (testhook::corrupt_enabled && source_op == testhook::corrupted_backward)
        c = specguard::scale(c, real(1.01));
    if (!t.grad_set) {
        t.grad = Matrix(t.value.rows(), t.value.cols());
        t.grad_set = true;
    }
    if (!t.grad.same_shape(c)) throw ShapeError("gradient shape mismatch");
    for (std::size_t i = 0; i < c.size(); ++i) t.grad.raw()[i] += c.raw()[i];
}

void Graph::backward_into_parents(int i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    const Matrix& dy = n.grad;
    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::MatMul: {
            const Matrix& a = nodes_[static_cast<std::size_t>(n.parents[0])].value;
            const Matrix& b = nodes_[static_cast<std::size_t>(n.parents[1])].value;
            accumulate(n.parents[0], specguard::matmul(dy, specguard::transpose(b)), n.op);
            accumulate(n.parents[1], specguard::matmul(specguard::transpose(a), dy), n.op);
            break;
        }
        case Op::Add:
            accumulate(n.parents[0], dy, n.op);
            accumulate(n.parents[1], dy, n.op);
            break;
        case Op::Scale:
            accumulate(n.parents[0], specguard::scale(dy, static_cast<real>(n.aux)), n.op);
            break;
        case Op::Transpose:
            accumulate(n.parents[0], specguard::transpose(dy), n.op);
            break;
        case Op::RowSoftmax: {
            const Matrix& y = n.value;
            Matrix dx(y.rows(), y.cols());
            for (int r = 0; r < y.rows(); ++r) {
                double inner = 0.0;
                for (int j = 0; j < y.cols(); ++j) inner += static_cast<double>(dy.at(r, j)) * y.at(r, j);
                for (int j = 0; j < y.cols(); ++j)
                    dx.at(r, j) = static_cast<real>(y.at(r, j) * (static_cast<double>(dy.at(r, j)) - inner));
            }
            accumulate(n.parents[0], dx, n.op);
            break;
        }
        case Op::LayerNorm: {
            const Matrix& g = nodes_[static_cast<std::size_t>(n.parents[1])].value;
            const Matrix& xhat = n.cache;
            const Matrix& inv_std = n.cache2;
            const int rows = xhat.rows(), cols = xhat.cols();
            Matrix dx(rows, cols), dgain(1, cols), dbias(1, cols);
            for (int r = 0; r < rows; ++r) {
                double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                for (int j = 0; j < cols; ++j) {
                    const double dxh = static_cast<double>(dy.at(r, j)) * g.at(0, j);
                    mean_dxhat += dxh;
                    mean_dxhat_xhat += dxh * xhat.at(r, j);
                    dgain.at(0, j) += static_cast<real>(static_cast<double>(dy.at(r, j)) * xhat.at(r, j));
                    dbias.at(0, j) += dy.at(r, j);
                }
                mean_dxhat /= cols;
                mean_dxhat_xhat /= cols;
                for (int j = 0; j < cols; ++j) {
                    const double dxh = static_cast<double>(dy.at(r, j)) * g.at(0, j);
                    dx.at(r, j) = static_cast<real>(inv_std.at(r, 0) *
                                                    (dxh - mean_dxhat - static_cast<double>(xhat.at(r, j)) * mean_dxhat_xhat));
                }
            }
            accumulate(n.parents[0], dx, n.op);
            accumulate(n.parents[1], dgain, n.op);
            accumulate(n.parents[2], dbias, n.op);
            break;
        }
        case Op::Gelu: {
            const Matrix& x = nodes_[static_cast<std::size_t>(n.parents[0])].value;
            Matrix dx(x.rows(), x.cols());
            const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
            const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * 3.14159265358979323846);
            for (std::size_t k = 0; k < x.size(); ++k) {
                const double v = x.raw()[k];
                const double d = 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * std::exp(-0.5 * v * v) * inv_sqrt2pi;
                dx.raw()[k] = static_cast<real>(d * dy.raw()[k]);
            }
            accumulate(n.parents[0], dx, n.op);
            break;
        }
        case Op::MeanPool: {
            const Matrix& x = nodes_[static_cast<std::size_t>(n.parents[0])].value;
            Matrix dx(x.rows(), x.cols());
            for (int i = 0; i < x.rows(); ++i)
                for (int j = 0; j < x.cols(); ++j)
                    dx.at(i, j) = static_cast<real>(static_cast<double>(dy.at(0, j)) / x.rows());
            accumulate(n.parents[0], dx, n.op);
            break;
        }
        case Op::CrossEntropy: {
            const Matrix& probs = n.cache;
            const double droot = static_cast<double>(dy.at(0, 0)) / probs.rows();
            Matrix dz = probs;
            for (int i = 0; i < dz.rows(); ++i) {
                dz.at(i, n.idx[static_cast<std::size_t>(i)]) -= real(1);
                for (int j = 0; j < dz.cols(); ++j) dz.at(i, j) = static_cast<real>(dz.at(i, j) * droot);
            }
            accumulate(n.parents[0], dz, n.op);
            break;
        }
        case Op::AddRowVec: {
            accumulate(n.parents[0], dy, n.op);
            Matrix dr(1, dy.cols());
            for (int j = 0; j < dy.cols(); ++j) {
                double s = 0.0;
                for (int i = 0; i < dy.rows(); ++i) s += dy.at(i, j);
                dr.at(0, j) = static_cast<real>(s);
            }
            accumulate(n.parents[1], dr, n.op);
            break;
        }
        case Op::ConcatCols: {
            int off = 0;
            for (int p : n.parents) {
                const Matrix& part = nodes_[static_cast<std::size_t>(p)].value;
                Matrix dp(part.rows(), part.cols());
                for (int i = 0; i < part.rows(); ++i)
                    for (int j = 0; j < part.cols(); ++j) dp.at(i, j) = dy.at(i, off + j);
                accumulate(p, dp, n.op);
                off += part.cols();
            }
            break;
        }
        case Op::ConcatRows: {
            int off = 0;
            for (int p : n.parents) {
                const Matrix& part = nodes_[static_cast<std::size_t>(p)].value;
                Matrix dp(part.rows(), part.cols());
                for (int i = 0; i < part.rows(); ++i)
                    for (int j = 0; j < part.cols(); ++j) dp.at(i, j) = dy.at(off + i, j);
                accumulate(p, dp, n.op);
                off += part.rows();
            }
            break;
        }
        case Op::Square: {
            const Matrix& x = nodes_[static_cast<std::size_t>(n.parents[0])].value;
            Matrix dx = x;
            for (std::size_t k = 0; k < dx.size(); ++k) dx.raw()[k] = real(2) * x.raw()[k] * dy.raw()[k];
            accumulate(n.parents[0], dx, n.op);
            break;
        }
        case Op::Sum: {
            const Matrix& x = nodes_[static_cast<std::size_t>(n.parents[0])].value;
            Matrix dx(x.rows(), x.cols());
            const real g0 = dy.at(0, 0);
            for (auto& v : dx.raw()) v = g0;
            accumulate(n.parents[0], dx, n.op);
            break;
        }
        case Op::Reorder: {
            const Matrix& x = nodes_[static_cast<std::size_t>(n.parents[0])].value;
            Matrix dx(x.rows(), x.cols());
            for (std::size_t k = 0; k < n.idx.size(); ++k)
                dx.raw()[static_cast<std::size_t>(n.idx[k])] += dy.raw()[k];
            accumulate(n.parents[0], dx, n.op);
            break;
        }
    }
}

void Graph::backward(Value root) {
    const Node& r = node(root);
    if (r.value.rows() != 1 || r.value.cols() != 1)
        throw ContractError("backward: root must be scalar, got " + shape_string(r.value));

    // Ancestor set of the root; creation order is already topological.
    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<int> stack = {root.idx};
    reachable[static_cast<std::size_t>(root.idx)] = 1;
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        for (int p : nodes_[static_cast<std::size_t>(i)].parents) {
            if (!reachable[static_cast<std::size_t>(p)]) {
                reachable[static_cast<std::size_t>(p)] = 1;
                stack.push_back(p);
            }
        }
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (reachable[i]) {
            nodes_[i].grad = Matrix(nodes_[i].value.rows(), nodes_[i].value.cols());
            nodes_[i].grad_set = true;
        }
    }
    nodes_[static_cast<std::size_t>(root.idx)].grad.at(0, 0) = real(1);
    for (int i = root.idx; i >= 0; --i) {
        if (reachable[static_cast<std::size_t>(i)]) backward_into_parents(i);
    }
}

double finite_diff_check(const ScalarGraphFn& f, const Matrix& x, double h) {
    if (!(h > 1e-8 && h < 1e-3)) throw ContractError("finite_diff_check: h must lie in (1e-8, 1e-3)");

    Graph g;
    Graph::Value xn = g.leaf(x);
    Graph::Value root = f(g, xn);
    if (g.value(root).rows() != 1 || g.value(root).cols() != 1)
        throw ContractError("finite_diff_check: f must produce a scalar");
    g.backward(root);
    const Matrix analytic = g.grad(xn);

    auto eval = [&](const Matrix& probe) {
        Graph gp;
        return static_cast<double>(gp.value(f(gp, gp.leaf(probe))).at(0, 0));
    };

    double max_rel = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        Matrix plus = x, minus = x;
        plus.raw()[k] += static_cast<real>(h);
        minus.raw()[k] -= static_cast<real>(h);
        const double fd = (eval(plus) - eval(minus)) / (2.0 * h);
        const double rel = std::abs(fd - static_cast<double>(analytic.raw()[k])) / std::max(std::abs(fd), 1e-8);
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace specguard
