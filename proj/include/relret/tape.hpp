#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "relret/dense.hpp"
#include "relret/error.hpp"
#include "relret/kernels.hpp"
#include "relret/rng.hpp"
#include "relret/sparse.hpp"

namespace relret {

/// Reverse-mode tape over the kernel set. Forward calls record one backward
/// step each (with whatever activations it needs saved by value); backward()
/// replays the records in exact reverse order, accumulating gradients
/// additively into every node.
class Tape {
 public:
  using Id = std::size_t;

  /// Registers a leaf. Gradients are tracked for every leaf; callers read
  /// back only the ones they care about.
  Id input(DenseMatrix value) { return make_node(std::move(value)); }

  Id matmul(Id a, Id b) {
    Id out = make_node(relret::matmul(value(a), value(b)));
    ops_.push_back([this, a, b, out] {
      matmul_backward(nodes_[out].grad, nodes_[a].value, nodes_[b].value,
                      nodes_[a].grad, nodes_[b].grad);
    });
    return out;
  }

  /// The sparse operand is constant; only X receives a gradient. The caller
  /// must keep `a` alive until backward() has run.
  Id spmm(const SparseMatrix& a, Id x) {
    Id out = make_node(relret::spmm(a, value(x)));
    const SparseMatrix* ap = &a;
    ops_.push_back([this, ap, x, out] {
      spmm_backward(*ap, nodes_[out].grad, nodes_[x].grad);
    });
    return out;
  }

  Id relu(Id x) {
    Id out = make_node(relret::relu(value(x)));
    ops_.push_back([this, x, out] {
      relu_backward(nodes_[out].grad, nodes_[x].value, nodes_[x].grad);
    });
    return out;
  }

  Id sigmoid(Id x) {
    Id out = make_node(relret::sigmoid(value(x)));
    ops_.push_back([this, x, out] {
      sigmoid_backward(nodes_[out].grad, nodes_[out].value, nodes_[x].grad);
    });
    return out;
  }

  Id hadamard(Id a, Id b) {
    Id out = make_node(relret::hadamard(value(a), value(b)));
    ops_.push_back([this, a, b, out] {
      hadamard_backward(nodes_[out].grad, nodes_[a].value, nodes_[b].value,
                        nodes_[a].grad, nodes_[b].grad);
    });
    return out;
  }

  Id add(Id a, Id b) {
    Id out = make_node(relret::add(value(a), value(b)));
    ops_.push_back([this, a, b, out] {
      add_backward(nodes_[out].grad, nodes_[a].grad, nodes_[b].grad);
    });
    return out;
  }

  Id dropout(Id x, double p, bool train, Rng& rng) {
    std::vector<std::uint8_t> mask;
    Id out = make_node(relret::dropout(value(x), p, train, rng, mask));
    ops_.push_back([this, x, out, p, train, mask = std::move(mask)] {
      dropout_backward(nodes_[out].grad, mask, p, train, nodes_[x].grad);
    });
    return out;
  }

  Id mean_rows(Id x) {
    const std::size_t rows = value(x).rows();
    Id out = make_node(relret::mean_rows(value(x)));
    ops_.push_back([this, x, out, rows] {
      mean_rows_backward(nodes_[out].grad, rows, nodes_[x].grad);
    });
    return out;
  }

  Id sum_rows(Id x) {
    const std::size_t rows = value(x).rows();
    Id out = make_node(relret::sum_rows(value(x)));
    ops_.push_back([this, x, out, rows] {
      sum_rows_backward(nodes_[out].grad, rows, nodes_[x].grad);
    });
    return out;
  }

  Id flatten(Id x) {
    Id out = make_node(relret::flatten(value(x)));
    ops_.push_back([this, x, out] {
      flatten_backward(nodes_[out].grad, nodes_[x].grad);
    });
    return out;
  }

  /// Elementwise y_i = f(x_i) with df(x_i, y_i) = dy_i/dx_i. Lets callers
  /// define scalar heads (losses) without widening the kernel set.
  Id map_unary(Id x, const std::function<double(double)>& f,
               std::function<double(double, double)> df) {
    DenseMatrix y = value(x);
    for (double& v : y.data()) v = f(v);
    Id out = make_node(std::move(y));
    ops_.push_back([this, x, out, df = std::move(df)] {
      const DenseMatrix& xv = nodes_[x].value;
      const DenseMatrix& yv = nodes_[out].value;
      for (std::size_t i = 0; i < xv.size(); ++i)
        nodes_[x].grad[i] += nodes_[out].grad[i] * df(xv[i], yv[i]);
    });
    return out;
  }

  /// References returned here are invalidated by the next op recorded on
  /// this tape (node storage may reallocate); copy first if you need both.
  const DenseMatrix& value(Id id) const { return nodes_[id].value; }
  const DenseMatrix& grad(Id id) const { return nodes_[id].grad; }

  double scalar(Id id) const {
    if (value(id).size() != 1)
      throw ValidationError("Tape::scalar: node is not 1x1");
    return value(id)[0];
  }

  /// Seeds d(root)/d(root) = 1 and replays all records in reverse.
  void backward(Id root) {
    if (nodes_[root].value.size() != 1)
      throw ValidationError("Tape::backward: root must be a scalar node");
    for (auto& n : nodes_) n.grad.fill(0.0);
    nodes_[root].grad[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

 private:
  struct Node {
    DenseMatrix value;
    DenseMatrix grad;
  };

  Id make_node(DenseMatrix value) {
    Node n;
    n.grad = DenseMatrix(value.rows(), value.cols());
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> ops_;
};

}  // namespace relret
