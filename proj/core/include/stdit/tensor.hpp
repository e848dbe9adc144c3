#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "stdit/error.hpp"

namespace stdit {

// Dense row-major matrix of 64-bit floats. Vectors are stored as 1 x n.
// Tensors are plain values; once handed to a Graph they are treated as
// immutable.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Tensor(std::size_t r, std::size_t c, std::vector<double> values);

    static Tensor row(std::vector<double> values);
    static Tensor full(std::size_t r, std::size_t c, double value);

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const;
    bool all_finite() const;
};

// Reverse-mode tape. Nodes are appended in topological order (parents always
// precede children), so backward is a single reverse sweep. One Graph is one
// forward/backward pass; it is not thread-safe and not meant to be reused
// across steps.
class Graph {
  public:
    using NodeId = std::size_t;
    static constexpr NodeId npos = static_cast<NodeId>(-1);

    // leaf holding a value; gradient accumulates here during backward
    NodeId input(Tensor value);

    // References stay valid for the graph's lifetime (node storage never
    // relocates).
    const Tensor& value(NodeId id) const { return nodes_[id].val; }
    // zero tensor of the node's shape until backward touches it
    const Tensor& grad(NodeId id) const;

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);  // elementwise
    NodeId add_rowvec(NodeId m, NodeId v);  // broadcast 1 x C over rows
    NodeId mul_rowvec(NodeId m, NodeId v);
    NodeId scale(NodeId a, double s);
    NodeId add_scalar(NodeId a, double s);
    NodeId matmul(NodeId a, NodeId b);
    NodeId matmul_nt(NodeId a, NodeId b);  // a * b^T
    NodeId softmax_rows(NodeId a);
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
    NodeId gelu(NodeId a);  // tanh form: 0.5x(1+tanh(sqrt(2/pi)(x+0.044715x^3)))
    NodeId mean_rows(NodeId a);  // R x C -> 1 x C
    NodeId sum(NodeId a);        // -> 1 x 1
    NodeId concat_rows(NodeId a, NodeId b);
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId slice_row(NodeId a, std::size_t r);                    // -> 1 x C
    NodeId slice_cols(NodeId a, std::size_t c0, std::size_t c1);  // half-open
    NodeId select_rows(NodeId a, std::vector<std::size_t> idx);
    // mean of (pred - target)^2 over entries where mask == 1; -> 1 x 1
    NodeId masked_mse(NodeId pred, Tensor target, Tensor mask);

    // Seeds d(root)/d(root) = 1 and accumulates gradients into every
    // ancestor. root must be 1 x 1.
    void backward(NodeId root);

    std::size_t node_count() const { return nodes_.size(); }

  private:
    enum class Op {
        Leaf,
        Add,
        Sub,
        Mul,
        AddRowVec,
        MulRowVec,
        Scale,
        AddScalar,
        MatMul,
        MatMulNT,
        SoftmaxRows,
        LayerNorm,
        Gelu,
        MeanRows,
        Sum,
        ConcatRows,
        ConcatCols,
        SliceRow,
        SliceCols,
        SelectRows,
        MaskedMse,
    };

    struct Node {
        Op op = Op::Leaf;
        NodeId a = npos, b = npos, c = npos;
        Tensor val;
        Tensor grad;
        double s = 0.0;  // scalar factor / shift / layer_norm eps
        std::size_t i0 = 0, i1 = 0;
        std::vector<std::size_t> idx;
        Tensor aux0, aux1;  // masked_mse target and mask
    };

    NodeId push(Node n);
    Tensor& grad_of(NodeId id);
    void backward_node(NodeId id);

    std::deque<Node> nodes_;
};

// Max over coordinates of |analytic - central difference| /
// (|analytic| + |cd| + 1e-12) for a scalar-valued graph built by `build` from
// leaves holding `inputs`. Throws NumericError if the function value is not
// finite.
double grad_check(
    const std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>& build,
    const std::vector<Tensor>& inputs, double h = 1e-5);

}  // namespace stdit
