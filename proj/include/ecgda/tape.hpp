#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ecgda/tensor.hpp"

namespace ecgda::ad {

enum class Op : uint8_t {
  Leaf,
  Reshape,
  Add,
  Sub,
  Mul,
  Affine,  // a*x + b, scalar constants
  Relu,
  Conv1d,
  MaxPool1d,
  GlobalAvgPool,
  Dense,
  ConcatRows,  // axis 0
  ConcatCols,  // axis 1
  Softmax,
  LogSoftmax,
  SumAll,
  MeanAll,
  RowEuclidean,
  GatherRows,
  GroupMeanRows,
  PickNll,      // -w_i * logp[i, y_i]
  PickNegLog,   // -w_i * log(p[i, y_i])
  ReduceMax,
};

struct Node {
  Op op = Op::Leaf;
  std::array<int, 3> in{-1, -1, -1};
  std::vector<int> iargs;
  std::vector<float> fargs;
  Shape shape;
  std::vector<float> val;
  std::vector<float> grad;  // sized lazily during backward
  Param* param = nullptr;   // leaf binding; backward adds into param->grad
  bool needs_grad = false;
};

class Tape;

// Lightweight handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
  const std::vector<float>& val() const;
  const std::vector<float>& grad() const;
  float scalar() const;
};

// Dynamic reverse-mode tape: record forward ops, then backward() accumulates
// dLoss/dLeaf into node grads and bound Param grads. One tape per training
// step; tapes are single-threaded.
class Tape {
 public:
  // leaves
  Var leaf(Param& p);
  Var input(const Tensor& t, bool needs_grad = false);
  Var constant(std::vector<float> data, Shape shape);
  Var constant_scalar(float v) { return constant({v}, {1}); }

  // ops
  Var reshape(Var x, Shape s);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var affine(Var x, float a, float b);
  Var relu(Var x);
  Var conv1d(Var x, Var w, Var b, int stride, bool same_pad);
  Var maxpool1d(Var x, int k, int stride);
  Var global_avg_pool(Var x);
  Var dense(Var x, Var w, Var b);
  Var concat_rows(Var a, Var b);
  Var concat_cols(Var a, Var b);
  Var softmax(Var x);
  Var log_softmax(Var x);
  Var sum_all(Var x);
  Var mean_all(Var x);
  Var row_euclidean(Var a, Var b);
  Var gather_rows(Var x, const std::vector<int>& rows);
  // Per-group mean of rows; groups[i] in [0, num_groups). Output has one row per
  // group present in `groups`, ordered by group id; `present_out` receives them.
  Var group_mean_rows(Var x, const std::vector<int>& groups, int num_groups,
                      std::vector<int>* present_out = nullptr);
  Var pick_nll(Var logp, const std::vector<int>& labels, const std::vector<float>& weights);
  Var pick_neg_log(Var p, const std::vector<int>& labels, const std::vector<float>& weights);
  Var reduce_max(Var x);

  // Accumulates gradients of `loss` (scalar) into every needs_grad node and
  // every bound Param. Node-local grads reset per call, so repeated calls
  // without zero_grad double Param grads.
  void backward(Var loss);

  // Re-evaluates the forward pass in double precision with one leaf element
  // perturbed by delta; returns the (scalar) value of `out`. Used by the
  // finite-difference gradient checks.
  double eval_double(Var out, int leaf_id, int64_t elem, double delta) const;

  size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }

 private:
  friend struct Var;
  int push(Node n);
  Var make(Op op, Shape shape, std::array<int, 3> in, std::vector<int> iargs = {},
           std::vector<float> fargs = {});
  void forward_f32(Node& n);

  std::vector<Node> nodes_;
};

}  // namespace ecgda::ad
