#pragma once

#include <functional>
#include <vector>

#include "specguard/matrix.hpp"

namespace specguard {

enum class Op {
    Leaf,
    MatMul,
    Add,
    Scale,
    Transpose,
    RowSoftmax,
    LayerNorm,
    Gelu,
    MeanPool,
    CrossEntropy,
    AddRowVec,
    ConcatCols,
    ConcatRows,
    Square,
    Sum,
    Reorder,
};

const char* op_name(Op op);

// Test hook: when set, backward contributions of the named op are scaled by
// 1.01 so the verification suites can prove they catch a broken rule.
namespace testhook {
extern Op corrupted_backward;
extern bool corrupt_enabled;
void corrupt_backward_rule(Op op);
void clear_corruption();
}  // namespace testhook

// Reverse-mode graph over Matrix values. Nodes are created in topological
// order; backward walks creation order in reverse and accumulates gradients
// additively, so a node used twice receives both path contributions.
class Graph {
  public:
    struct Value {
        int idx = -1;
    };

    Value leaf(Matrix v);

    Value matmul(Value a, Value b);
    Value add(Value a, Value b);
    Value scale(Value a, double s);
    Value transpose(Value a);
    Value row_softmax(Value a);
    // gain/bias are 1 x d, broadcast over rows; eps sits inside the sqrt.
    Value layer_norm(Value x, Value gain, Value bias, double eps = 1e-5);
    Value gelu(Value a);  // exact erf form
    Value mean_pool(Value a);
    // Mean over rows of -log softmax(logits)[label].
    Value cross_entropy(Value logits, const std::vector<int>& labels);
    Value add_rowvec(Value a, Value row);
    Value concat_cols(const std::vector<Value>& parts);
    Value concat_rows(const std::vector<Value>& parts);
    Value square(Value a);
    Value sum(Value a);
    // Pure index permutation/reshape: out.flat[k] = in.flat[map[k]].
    Value reorder(Value a, std::vector<int> index_map, int out_rows, int out_cols);

    // Populates grads of all ancestors of a scalar root; resets previous
    // gradients first so repeated calls are bit-identical.
    void backward(Value root);

    const Matrix& value(Value v) const;
    const Matrix& grad(Value v) const;
    bool has_grad(Value v) const;

    int size() const { return static_cast<int>(nodes_.size()); }

  private:
    struct Node {
        Op op = Op::Leaf;
        Matrix value;
        Matrix grad;
        bool grad_set = false;
        std::vector<int> parents;
        double aux = 0.0;
        std::vector<int> idx;   // labels (CrossEntropy) or index map (Reorder)
        Matrix cache;           // op-specific forward cache
        Matrix cache2;
    };

    int push(Node n);
    Node& node(Value v);
    const Node& node(Value v) const;
    void accumulate(int target, const Matrix& contribution, Op source_op);
    void backward_into_parents(int i);

    std::vector<Node> nodes_;
};

using GraphValue = Graph::Value;

// Builds f's graph once for the analytic gradient, then probes f with
// central differences (step h) entry by entry. Returns the largest relative
// error, with denominator max(|finite difference|, 1e-8).
using ScalarGraphFn = std::function<Graph::Value(Graph&, Graph::Value)>;
double finite_diff_check(const ScalarGraphFn& f, const Matrix& x, double h);

}  // namespace specguard
