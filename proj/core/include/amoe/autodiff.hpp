#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "amoe/tensor.hpp"

namespace amoe {

struct NodeData;
using Node = std::shared_ptr<NodeData>;

// One vertex of the dynamic computation graph. `backprop` distributes this
// node's grad into its parents' grads; it is only invoked when requires_grad.
struct NodeData {
    Tensor2 value;
    Tensor2 grad;  // same shape as value, zero until backward reaches it
    bool requires_grad = false;
    std::vector<Node> parents;
    std::function<void(NodeData&)> backprop;
};

// Records nodes in execution order; that order is topological by
// construction, so backward is a single reverse sweep. One tape per
// training step; single-threaded.
class Tape {
  public:
    // Leaf with gradient tracking. Rejects non-finite entries.
    Node leaf(Tensor2 value, bool requires_grad = true);
    // Constant leaf, never differentiated (masks may contain large negatives).
    Node constant(Tensor2 value);
    // Generic op node; other modules use this to define fused ops.
    Node make(Tensor2 value, std::vector<Node> parents, std::function<void(NodeData&)> backprop);

    // Reverse sweep from a scalar (1x1) root. Gradients accumulate
    // additively across fan-out.
    void backward(const Node& root);

    std::size_t size() const { return order_.size(); }

  private:
    std::vector<Node> order_;
};

// Core op set. All ops validate shapes and throw DimensionError on mismatch.
Node matmul(Tape& t, const Node& a, const Node& b);
Node transpose(Tape& t, const Node& a);
Node add(Tape& t, const Node& a, const Node& b);
Node sub(Tape& t, const Node& a, const Node& b);
Node hadamard(Tape& t, const Node& a, const Node& b);
Node scale(Tape& t, const Node& a, double c);
Node tanh_map(Tape& t, const Node& a);
Node add_rowvec(Tape& t, const Node& m, const Node& row);    // m[TxN] + row[1xN]
Node scale_rows(Tape& t, const Node& m, const Node& col);    // row i of m scaled by col[i,0]
Node softmax_rows(Tape& t, const Node& a);                   // row-max subtracted
Node mean_rows(Tape& t, const Node& a);                      // [mxn] -> [1xn]
Node sum_all(Tape& t, const Node& a);                        // -> [1x1]
Node slice_rows(Tape& t, const Node& a, int first, int count);
Node slice_cols(Tape& t, const Node& a, int first, int count);
Node concat_cols(Tape& t, const std::vector<Node>& parts);
Node reshape(Tape& t, const Node& a, int rows, int cols);
Node embed_rows(Tape& t, const Node& table, const std::vector<int>& ids);
Node layernorm_rows(Tape& t, const Node& x, const Node& gain, const Node& bias, double eps = 1e-5);

// Central-difference gradient verification. `build` constructs a fresh graph
// from the current *params values and must push one leaf node per param, in
// order, into its out-vector; it returns the scalar loss node. Returns
// max over entries of |g_a - g_n| / max(1e-8, |g_a| + |g_n|).
double grad_check(const std::function<Node(Tape&, std::vector<Node>&)>& build,
                  const std::vector<Tensor2*>& params, double eps);

}  // namespace amoe
