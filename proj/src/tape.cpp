#include "ecgda/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ecgda::ad {

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                              shape_str(b));
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

struct ConvDims {
  int N, Cin, L, Cout, K, stride, padL, Lout;
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, bool same_pad) {
  require(xs.size() == 3, "conv1d: input must be [N,C,L], got " + shape_str(xs));
  require(ws.size() == 3, "conv1d: weight must be [Cout,Cin,K], got " + shape_str(ws));
  require(ws[1] == xs[1], "conv1d: channel mismatch " + shape_str(xs) + " vs " + shape_str(ws));
  ConvDims d;
  d.N = xs[0];
  d.Cin = xs[1];
  d.L = xs[2];
  d.Cout = ws[0];
  d.K = ws[2];
  d.stride = stride;
  d.padL = same_pad ? (d.K - 1) / 2 : 0;
  const int padR = same_pad ? d.K - 1 - d.padL : 0;
  const int span = d.L + d.padL + padR - d.K;
  require(span >= 0, "conv1d: kernel longer than padded input");
  d.Lout = span / stride + 1;
  return d;
}

// ---- templated forward kernels (shared by the float path and the
// double-precision re-evaluation used by finite-difference checks) ----

template <class T>
void k_conv1d(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
  for (int n = 0; n < d.N; ++n) {
    for (int co = 0; co < d.Cout; ++co) {
      T* yrow = y + (static_cast<int64_t>(n) * d.Cout + co) * d.Lout;
      for (int t = 0; t < d.Lout; ++t) yrow[t] = b[co];
      for (int ci = 0; ci < d.Cin; ++ci) {
        const T* xrow = x + (static_cast<int64_t>(n) * d.Cin + ci) * d.L;
        const T* wrow = w + (static_cast<int64_t>(co) * d.Cin + ci) * d.K;
        if (d.stride == 1) {
          for (int k = 0; k < d.K; ++k) {
            const T wv = wrow[k];
            const int off = k - d.padL;
            const int t0 = std::max(0, -off);
            const int t1 = std::min(d.Lout, d.L - off);
            for (int t = t0; t < t1; ++t) yrow[t] += wv * xrow[t + off];
          }
        } else {
          for (int t = 0; t < d.Lout; ++t) {
            T acc = 0;
            for (int k = 0; k < d.K; ++k) {
              const int idx = t * d.stride + k - d.padL;
              if (idx >= 0 && idx < d.L) acc += wrow[k] * xrow[idx];
            }
            yrow[t] += acc;
          }
        }
      }
    }
  }
}

template <class T>
void k_maxpool(const T* x, T* y, int NC, int L, int k, int stride, int Lout) {
  for (int r = 0; r < NC; ++r) {
    const T* xr = x + static_cast<int64_t>(r) * L;
    T* yr = y + static_cast<int64_t>(r) * Lout;
    for (int t = 0; t < Lout; ++t) {
      T best = xr[t * stride];
      for (int j = 1; j < k; ++j) best = std::max(best, xr[t * stride + j]);
      yr[t] = best;
    }
  }
}

template <class T>
void k_gap(const T* x, T* y, int NC, int L) {
  for (int r = 0; r < NC; ++r) {
    double acc = 0.0;
    const T* xr = x + static_cast<int64_t>(r) * L;
    for (int t = 0; t < L; ++t) acc += static_cast<double>(xr[t]);
    y[r] = static_cast<T>(acc / L);
  }
}

template <class T>
void k_dense(const T* x, const T* w, const T* b, T* y, int B, int I, int O) {
  for (int n = 0; n < B; ++n) {
    const T* xr = x + static_cast<int64_t>(n) * I;
    T* yr = y + static_cast<int64_t>(n) * O;
    for (int o = 0; o < O; ++o) {
      double acc = static_cast<double>(b[o]);
      const T* wr = w + static_cast<int64_t>(o) * I;
      for (int i = 0; i < I; ++i) acc += static_cast<double>(xr[i]) * static_cast<double>(wr[i]);
      yr[o] = static_cast<T>(acc);
    }
  }
}

template <class T>
void k_softmax(const T* x, T* y, int B, int K, bool log_form) {
  for (int n = 0; n < B; ++n) {
    const T* xr = x + static_cast<int64_t>(n) * K;
    T* yr = y + static_cast<int64_t>(n) * K;
    T mx = xr[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, xr[k]);
    double denom = 0.0;
    for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(xr[k] - mx));
    if (log_form) {
      const double ld = std::log(denom);
      for (int k = 0; k < K; ++k) yr[k] = static_cast<T>(static_cast<double>(xr[k] - mx) - ld);
    } else {
      for (int k = 0; k < K; ++k)
        yr[k] = static_cast<T>(std::exp(static_cast<double>(xr[k] - mx)) / denom);
    }
  }
}

template <class T>
void k_row_euclidean(const T* a, const T* b, T* y, int B, int D) {
  for (int n = 0; n < B; ++n) {
    double acc = 0.0;
    const T* ar = a + static_cast<int64_t>(n) * D;
    const T* br = b + static_cast<int64_t>(n) * D;
    for (int d = 0; d < D; ++d) {
      const double diff = static_cast<double>(ar[d]) - static_cast<double>(br[d]);
      acc += diff * diff;
    }
    y[n] = static_cast<T>(std::sqrt(acc));
  }
}

template <class T>
void eval_op(const Node& n, const std::vector<const T*>& ins,
             const std::vector<const Shape*>& ishapes, T* out) {
  const int64_t n_out = numel(n.shape);
  switch (n.op) {
    case Op::Leaf:
      break;  // handled by caller
    case Op::Reshape:
      std::copy(ins[0], ins[0] + n_out, out);
      break;
    case Op::Add:
      for (int64_t i = 0; i < n_out; ++i) out[i] = ins[0][i] + ins[1][i];
      break;
    case Op::Sub:
      for (int64_t i = 0; i < n_out; ++i) out[i] = ins[0][i] - ins[1][i];
      break;
    case Op::Mul:
      for (int64_t i = 0; i < n_out; ++i) out[i] = ins[0][i] * ins[1][i];
      break;
    case Op::Affine: {
      const T a = static_cast<T>(n.fargs[0]), b = static_cast<T>(n.fargs[1]);
      for (int64_t i = 0; i < n_out; ++i) out[i] = a * ins[0][i] + b;
      break;
    }
    case Op::Relu:
      for (int64_t i = 0; i < n_out; ++i) out[i] = ins[0][i] > T(0) ? ins[0][i] : T(0);
      break;
    case Op::Conv1d: {
      const ConvDims d = conv_dims(*ishapes[0], *ishapes[1], n.iargs[0], n.iargs[1] != 0);
      k_conv1d(d, ins[0], ins[1], ins[2], out);
      break;
    }
    case Op::MaxPool1d: {
      const Shape& xs = *ishapes[0];
      k_maxpool(ins[0], out, xs[0] * xs[1], xs[2], n.iargs[0], n.iargs[1], n.shape[2]);
      break;
    }
    case Op::GlobalAvgPool: {
      const Shape& xs = *ishapes[0];
      k_gap(ins[0], out, xs[0] * xs[1], xs[2]);
      break;
    }
    case Op::Dense: {
      const Shape& xs = *ishapes[0];
      const Shape& ws = *ishapes[1];
      k_dense(ins[0], ins[1], ins[2], out, xs[0], xs[1], ws[0]);
      break;
    }
    case Op::ConcatRows: {
      const int64_t a = numel(*ishapes[0]);
      std::copy(ins[0], ins[0] + a, out);
      std::copy(ins[1], ins[1] + numel(*ishapes[1]), out + a);
      break;
    }
    case Op::ConcatCols: {
      const Shape& as = *ishapes[0];
      const Shape& bs = *ishapes[1];
      const int B = as[0], D1 = as[1], D2 = bs[1];
      for (int r = 0; r < B; ++r) {
        std::copy(ins[0] + static_cast<int64_t>(r) * D1, ins[0] + static_cast<int64_t>(r + 1) * D1,
                  out + static_cast<int64_t>(r) * (D1 + D2));
        std::copy(ins[1] + static_cast<int64_t>(r) * D2, ins[1] + static_cast<int64_t>(r + 1) * D2,
                  out + static_cast<int64_t>(r) * (D1 + D2) + D1);
      }
      break;
    }
    case Op::Softmax:
      k_softmax(ins[0], out, (*ishapes[0])[0], (*ishapes[0])[1], false);
      break;
    case Op::LogSoftmax:
      k_softmax(ins[0], out, (*ishapes[0])[0], (*ishapes[0])[1], true);
      break;
    case Op::SumAll:
    case Op::MeanAll: {
      double acc = 0.0;
      const int64_t m = numel(*ishapes[0]);
      for (int64_t i = 0; i < m; ++i) acc += static_cast<double>(ins[0][i]);
      out[0] = static_cast<T>(n.op == Op::MeanAll ? acc / static_cast<double>(m) : acc);
      break;
    }
    case Op::RowEuclidean: {
      const Shape& as = *ishapes[0];
      const int B = as.size() == 2 ? as[0] : 1;
      const int D = as.size() == 2 ? as[1] : as[0];
      k_row_euclidean(ins[0], ins[1], out, B, D);
      break;
    }
    case Op::GatherRows: {
      const int D = (*ishapes[0])[1];
      for (size_t r = 0; r < n.iargs.size(); ++r)
        std::copy(ins[0] + static_cast<int64_t>(n.iargs[r]) * D,
                  ins[0] + static_cast<int64_t>(n.iargs[r] + 1) * D,
                  out + static_cast<int64_t>(r) * D);
      break;
    }
    case Op::GroupMeanRows: {
      const Shape& xs = *ishapes[0];
      const int B = xs[0], D = xs[1];
      const int P = n.shape[0];
      std::vector<double> acc(static_cast<size_t>(P) * D, 0.0);
      for (int i = 0; i < B; ++i) {
        const int slot = n.iargs[static_cast<size_t>(i)];
        for (int d = 0; d < D; ++d)
          acc[static_cast<size_t>(slot) * D + d] += static_cast<double>(ins[0][static_cast<int64_t>(i) * D + d]);
      }
      for (int p = 0; p < P; ++p) {
        const int cnt = n.iargs[static_cast<size_t>(B + p)];
        for (int d = 0; d < D; ++d)
          out[static_cast<int64_t>(p) * D + d] = static_cast<T>(acc[static_cast<size_t>(p) * D + d] / cnt);
      }
      break;
    }
    case Op::PickNll: {
      const int K = (*ishapes[0])[1];
      for (size_t i = 0; i < n.iargs.size(); ++i)
        out[i] = -static_cast<T>(n.fargs[i]) * ins[0][static_cast<int64_t>(i) * K + n.iargs[i]];
      break;
    }
    case Op::PickNegLog: {
      const int K = (*ishapes[0])[1];
      for (size_t i = 0; i < n.iargs.size(); ++i)
        out[i] = -static_cast<T>(n.fargs[i]) *
                 std::log(ins[0][static_cast<int64_t>(i) * K + n.iargs[i]]);
      break;
    }
    case Op::ReduceMax: {
      const int64_t m = numel(*ishapes[0]);
      T best = ins[0][0];
      for (int64_t i = 1; i < m; ++i) best = std::max(best, ins[0][i]);
      out[0] = best;
      break;
    }
  }
}

}  // namespace

const Shape& Var::shape() const { return tape->node(id).shape; }
const std::vector<float>& Var::val() const { return tape->node(id).val; }
const std::vector<float>& Var::grad() const { return tape->node(id).grad; }
float Var::scalar() const {
  const auto& v = val();
  require(v.size() == 1, "Var::scalar: tensor is not scalar");
  return v[0];
}

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(Param& p) {
  Node n;
  n.op = Op::Leaf;
  n.shape = p.value.shape;
  n.val = p.value.data;
  n.param = &p;
  n.needs_grad = true;
  return Var{this, push(std::move(n))};
}

Var Tape::input(const Tensor& t, bool needs_grad) {
  Node n;
  n.op = Op::Leaf;
  n.shape = t.shape;
  n.val = t.data;
  n.needs_grad = needs_grad;
  return Var{this, push(std::move(n))};
}

Var Tape::constant(std::vector<float> data, Shape shape) {
  require(static_cast<int64_t>(data.size()) == numel(shape), "Tape::constant: size/shape mismatch");
  Node n;
  n.op = Op::Leaf;
  n.shape = std::move(shape);
  n.val = std::move(data);
  return Var{this, push(std::move(n))};
}

Var Tape::make(Op op, Shape shape, std::array<int, 3> in, std::vector<int> iargs,
               std::vector<float> fargs) {
  Node n;
  n.op = op;
  n.in = in;
  n.iargs = std::move(iargs);
  n.fargs = std::move(fargs);
  n.shape = std::move(shape);
  n.val.resize(static_cast<size_t>(numel(n.shape)));
  for (int i : in)
    if (i >= 0 && nodes_[static_cast<size_t>(i)].needs_grad) n.needs_grad = true;
  forward_f32(n);
  return Var{this, push(std::move(n))};
}

void Tape::forward_f32(Node& n) {
  std::vector<const float*> ins;
  std::vector<const Shape*> ishapes;
  for (int i : n.in) {
    if (i < 0) break;
    ins.push_back(nodes_[static_cast<size_t>(i)].val.data());
    ishapes.push_back(&nodes_[static_cast<size_t>(i)].shape);
  }
  eval_op<float>(n, ins, ishapes, n.val.data());
}

// ---- op builders ----

Var Tape::reshape(Var x, Shape s) {
  require(numel(s) == numel(x.shape()), "reshape: numel mismatch " + shape_str(x.shape()) +
                                            " -> " + shape_str(s));
  return make(Op::Reshape, std::move(s), {x.id, -1, -1});
}

Var Tape::add(Var a, Var b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  return make(Op::Add, a.shape(), {a.id, b.id, -1});
}

Var Tape::sub(Var a, Var b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  return make(Op::Sub, a.shape(), {a.id, b.id, -1});
}

Var Tape::mul(Var a, Var b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  return make(Op::Mul, a.shape(), {a.id, b.id, -1});
}

Var Tape::affine(Var x, float a, float b) {
  return make(Op::Affine, x.shape(), {x.id, -1, -1}, {}, {a, b});
}

Var Tape::relu(Var x) { return make(Op::Relu, x.shape(), {x.id, -1, -1}); }

Var Tape::conv1d(Var x, Var w, Var b, int stride, bool same_pad) {
  require(stride >= 1, "conv1d: stride must be >= 1");
  const ConvDims d = conv_dims(x.shape(), w.shape(), stride, same_pad);
  require(b.shape() == Shape{d.Cout}, "conv1d: bias must be [Cout], got " + shape_str(b.shape()));
  return make(Op::Conv1d, {d.N, d.Cout, d.Lout}, {x.id, w.id, b.id},
              {stride, same_pad ? 1 : 0});
}

Var Tape::maxpool1d(Var x, int k, int stride) {
  require(x.shape().size() == 3, "maxpool1d: input must be [N,C,L], got " + shape_str(x.shape()));
  const int L = x.shape()[2];
  const int Lout = (L - k) / stride + 1;
  require(k >= 1 && stride >= 1 && L >= k && Lout >= 1,
          "maxpool1d: pooling underflow on length " + std::to_string(L));
  return make(Op::MaxPool1d, {x.shape()[0], x.shape()[1], Lout}, {x.id, -1, -1}, {k, stride});
}

Var Tape::global_avg_pool(Var x) {
  require(x.shape().size() == 3, "global_avg_pool: input must be [N,C,L], got " + shape_str(x.shape()));
  return make(Op::GlobalAvgPool, {x.shape()[0], x.shape()[1]}, {x.id, -1, -1});
}

Var Tape::dense(Var x, Var w, Var b) {
  require(x.shape().size() == 2, "dense: input must be [B,I], got " + shape_str(x.shape()));
  require(w.shape().size() == 2, "dense: weight must be [O,I], got " + shape_str(w.shape()));
  require(x.shape()[1] == w.shape()[1],
          "dense: inner dim mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  require(b.shape() == Shape{w.shape()[0]}, "dense: bias must be [O], got " + shape_str(b.shape()));
  return make(Op::Dense, {x.shape()[0], w.shape()[0]}, {x.id, w.id, b.id});
}

Var Tape::concat_rows(Var a, Var b) {
  require(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[1] == b.shape()[1],
          "concat_rows: need [B1,D]+[B2,D], got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  return make(Op::ConcatRows, {a.shape()[0] + b.shape()[0], a.shape()[1]}, {a.id, b.id, -1});
}

Var Tape::concat_cols(Var a, Var b) {
  require(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[0] == b.shape()[0],
          "concat_cols: need [B,D1]+[B,D2], got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  return make(Op::ConcatCols, {a.shape()[0], a.shape()[1] + b.shape()[1]}, {a.id, b.id, -1});
}

Var Tape::softmax(Var x) {
  require(x.shape().size() == 2, "softmax: input must be [B,K], got " + shape_str(x.shape()));
  return make(Op::Softmax, x.shape(), {x.id, -1, -1});
}

Var Tape::log_softmax(Var x) {
  require(x.shape().size() == 2, "log_softmax: input must be [B,K], got " + shape_str(x.shape()));
  return make(Op::LogSoftmax, x.shape(), {x.id, -1, -1});
}

Var Tape::sum_all(Var x) { return make(Op::SumAll, {1}, {x.id, -1, -1}); }
Var Tape::mean_all(Var x) { return make(Op::MeanAll, {1}, {x.id, -1, -1}); }

Var Tape::row_euclidean(Var a, Var b) {
  if (a.shape() != b.shape()) shape_error("row_euclidean", a.shape(), b.shape());
  require(a.shape().size() <= 2, "row_euclidean: input must be 1-D or 2-D");
  Shape out = a.shape().size() == 2 ? Shape{a.shape()[0]} : Shape{1};
  return make(Op::RowEuclidean, std::move(out), {a.id, b.id, -1});
}

Var Tape::gather_rows(Var x, const std::vector<int>& rows) {
  require(x.shape().size() == 2, "gather_rows: input must be [N,D], got " + shape_str(x.shape()));
  require(!rows.empty(), "gather_rows: empty row list");
  for (int r : rows)
    require(r >= 0 && r < x.shape()[0], "gather_rows: row index out of range");
  return make(Op::GatherRows, {static_cast<int>(rows.size()), x.shape()[1]}, {x.id, -1, -1}, rows);
}

Var Tape::group_mean_rows(Var x, const std::vector<int>& groups, int num_groups,
                          std::vector<int>* present_out) {
  require(x.shape().size() == 2, "group_mean_rows: input must be [B,D], got " + shape_str(x.shape()));
  const int B = x.shape()[0];
  require(static_cast<int>(groups.size()) == B, "group_mean_rows: group list size mismatch");
  std::vector<int> count(static_cast<size_t>(num_groups), 0);
  for (int g : groups) {
    require(g >= 0 && g < num_groups, "group_mean_rows: group id out of range");
    count[static_cast<size_t>(g)]++;
  }
  std::vector<int> present, slot_of_group(static_cast<size_t>(num_groups), -1);
  for (int g = 0; g < num_groups; ++g)
    if (count[static_cast<size_t>(g)] > 0) {
      slot_of_group[static_cast<size_t>(g)] = static_cast<int>(present.size());
      present.push_back(g);
    }
  require(!present.empty(), "group_mean_rows: no groups present");
  std::vector<int> iargs;
  iargs.reserve(groups.size() + 2 * present.size());
  for (int g : groups) iargs.push_back(slot_of_group[static_cast<size_t>(g)]);
  for (int g : present) iargs.push_back(count[static_cast<size_t>(g)]);
  for (int g : present) iargs.push_back(g);
  if (present_out) *present_out = present;
  return make(Op::GroupMeanRows, {static_cast<int>(present.size()), x.shape()[1]}, {x.id, -1, -1},
              std::move(iargs));
}

Var Tape::pick_nll(Var logp, const std::vector<int>& labels, const std::vector<float>& weights) {
  require(logp.shape().size() == 2, "pick_nll: input must be [B,K], got " + shape_str(logp.shape()));
  const int B = logp.shape()[0], K = logp.shape()[1];
  require(static_cast<int>(labels.size()) == B && weights.size() == labels.size(),
          "pick_nll: labels/weights size mismatch");
  for (int y : labels)
    require(y >= 0 && y < K, "pick_nll: label " + std::to_string(y) + " out of range [0," +
                                 std::to_string(K) + ")");
  return make(Op::PickNll, {B}, {logp.id, -1, -1}, labels, weights);
}

Var Tape::pick_neg_log(Var p, const std::vector<int>& labels, const std::vector<float>& weights) {
  require(p.shape().size() == 2, "pick_neg_log: input must be [B,K], got " + shape_str(p.shape()));
  const int B = p.shape()[0], K = p.shape()[1];
  require(static_cast<int>(labels.size()) == B && weights.size() == labels.size(),
          "pick_neg_log: labels/weights size mismatch");
  for (int y : labels)
    require(y >= 0 && y < K, "pick_neg_log: label out of range");
  return make(Op::PickNegLog, {B}, {p.id, -1, -1}, labels, weights);
}

Var Tape::reduce_max(Var x) { return make(Op::ReduceMax, {1}, {x.id, -1, -1}); }

// ---- backward ----

void Tape::backward(Var loss) {
  require(!nodes_.empty(), "backward: empty tape");
  require(loss.tape == this && loss.id >= 0 && loss.id < static_cast<int>(nodes_.size()),
          "backward: loss not on this tape");
  require(numel(nodes_[static_cast<size_t>(loss.id)].shape) == 1,
          "backward: loss must be scalar, got " +
              shape_str(nodes_[static_cast<size_t>(loss.id)].shape));

  for (int id = 0; id <= loss.id; ++id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.needs_grad)
      n.grad.assign(n.val.size(), 0.0f);
    else
      n.grad.clear();
  }
  Node& ln = nodes_[static_cast<size_t>(loss.id)];
  if (!ln.needs_grad) return;  // loss does not depend on any gradient leaf
  ln.grad[0] = 1.0f;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad || n.op == Op::Leaf) continue;
    const float* gy = n.grad.data();
    auto in_node = [&](int slot) -> Node& { return nodes_[static_cast<size_t>(n.in[slot])]; };
    auto gx = [&](int slot) -> float* {
      Node& m = in_node(slot);
      return m.needs_grad ? m.grad.data() : nullptr;
    };
    const int64_t n_out = static_cast<int64_t>(n.val.size());

    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Reshape: {
        if (float* d = gx(0))
          for (int64_t i = 0; i < n_out; ++i) d[i] += gy[i];
        break;
      }
      case Op::Add: {
        if (float* d = gx(0))
          for (int64_t i = 0; i < n_out; ++i) d[i] += gy[i];
        if (float* d = gx(1))
          for (int64_t i = 0; i < n_out; ++i) d[i] += gy[i];
        break;
      }
      case Op::Sub: {
        if (float* d = gx(0))
          for (int64_t i = 0; i < n_out; ++i) d[i] += gy[i];
        if (float* d = gx(1))
          for (int64_t i = 0; i < n_out; ++i) d[i] -= gy[i];
        break;
      }
      case Op::Mul: {
        const float* a = in_node(0).val.data();
        const float* b = in_node(1).val.data();
        if (float* d = gx(0))
          for (int64_t i = 0; i < n_out; ++i) d[i] += gy[i] * b[i];
        if (float* d = gx(1))
          for (int64_t i = 0; i < n_out; ++i) d[i] += gy[i] * a[i];
        break;
      }
      case Op::Affine: {
        const float a = n.fargs[0];
        if (float* d = gx(0))
          for (int64_t i = 0; i < n_out; ++i) d[i] += a * gy[i];
        break;
      }
      case Op::Relu: {
        const float* x = in_node(0).val.data();
        if (float* d = gx(0))
          for (int64_t i = 0; i < n_out; ++i)
            if (x[i] > 0.0f) d[i] += gy[i];
        break;
      }
      case Op::Conv1d: {
        const ConvDims d = conv_dims(in_node(0).shape, in_node(1).shape, n.iargs[0], n.iargs[1] != 0);
        const float* x = in_node(0).val.data();
        const float* w = in_node(1).val.data();
        float* dx = gx(0);
        float* dw = gx(1);
        float* db = gx(2);
        for (int nn = 0; nn < d.N; ++nn) {
          for (int co = 0; co < d.Cout; ++co) {
            const float* gyr = gy + (static_cast<int64_t>(nn) * d.Cout + co) * d.Lout;
            if (db) {
              double acc = 0.0;
              for (int t = 0; t < d.Lout; ++t) acc += static_cast<double>(gyr[t]);
              db[co] += static_cast<float>(acc);
            }
            for (int ci = 0; ci < d.Cin; ++ci) {
              const float* xr = x + (static_cast<int64_t>(nn) * d.Cin + ci) * d.L;
              const float* wr = w + (static_cast<int64_t>(co) * d.Cin + ci) * d.K;
              float* dxr = dx ? dx + (static_cast<int64_t>(nn) * d.Cin + ci) * d.L : nullptr;
              float* dwr = dw ? dw + (static_cast<int64_t>(co) * d.Cin + ci) * d.K : nullptr;
              if (d.stride == 1) {
                for (int k = 0; k < d.K; ++k) {
                  const int off = k - d.padL;
                  const int t0 = std::max(0, -off);
                  const int t1 = std::min(d.Lout, d.L - off);
                  if (dxr) {
                    const float wv = wr[k];
                    for (int t = t0; t < t1; ++t) dxr[t + off] += wv * gyr[t];
                  }
                  if (dwr) {
                    double acc = 0.0;
                    for (int t = t0; t < t1; ++t)
                      acc += static_cast<double>(gyr[t]) * static_cast<double>(xr[t + off]);
                    dwr[k] += static_cast<float>(acc);
                  }
                }
              } else {
                for (int t = 0; t < d.Lout; ++t) {
                  for (int k = 0; k < d.K; ++k) {
                    const int idx = t * d.stride + k - d.padL;
                    if (idx < 0 || idx >= d.L) continue;
                    if (dxr) dxr[idx] += wr[k] * gyr[t];
                    if (dwr) dwr[k] += gyr[t] * xr[idx];
                  }
                }
              }
            }
          }
        }
        break;
      }
      case Op::MaxPool1d: {
        const Shape& xs = in_node(0).shape;
        const int NC = xs[0] * xs[1], L = xs[2];
        const int k = n.iargs[0], stride = n.iargs[1];
        const int Lout = n.shape[2];
        const float* x = in_node(0).val.data();
        if (float* d = gx(0)) {
          for (int r = 0; r < NC; ++r) {
            const float* xr = x + static_cast<int64_t>(r) * L;
            float* dr = d + static_cast<int64_t>(r) * L;
            const float* gr = gy + static_cast<int64_t>(r) * Lout;
            for (int t = 0; t < Lout; ++t) {
              int best = t * stride;  // first maximal index wins ties
              for (int j = 1; j < k; ++j)
                if (xr[t * stride + j] > xr[best]) best = t * stride + j;
              dr[best] += gr[t];
            }
          }
        }
        break;
      }
      case Op::GlobalAvgPool: {
        const Shape& xs = in_node(0).shape;
        const int NC = xs[0] * xs[1], L = xs[2];
        if (float* d = gx(0)) {
          for (int r = 0; r < NC; ++r) {
            const float g = gy[r] / static_cast<float>(L);
            float* dr = d + static_cast<int64_t>(r) * L;
            for (int t = 0; t < L; ++t) dr[t] += g;
          }
        }
        break;
      }
      case Op::Dense: {
        const Shape& xs = in_node(0).shape;
        const Shape& ws = in_node(1).shape;
        const int B = xs[0], I = xs[1], O = ws[0];
        const float* x = in_node(0).val.data();
        const float* w = in_node(1).val.data();
        float* dx = gx(0);
        float* dw = gx(1);
        float* db = gx(2);
        for (int b = 0; b < B; ++b) {
          const float* gr = gy + static_cast<int64_t>(b) * O;
          const float* xr = x + static_cast<int64_t>(b) * I;
          for (int o = 0; o < O; ++o) {
            const float g = gr[o];
            if (g == 0.0f) continue;
            const float* wr = w + static_cast<int64_t>(o) * I;
            if (dx) {
              float* dxr = dx + static_cast<int64_t>(b) * I;
              for (int i = 0; i < I; ++i) dxr[i] += g * wr[i];
            }
            if (dw) {
              float* dwr = dw + static_cast<int64_t>(o) * I;
              for (int i = 0; i < I; ++i) dwr[i] += g * xr[i];
            }
            if (db) db[o] += g;
          }
        }
        break;
      }
      case Op::ConcatRows: {
        const int64_t a = static_cast<int64_t>(in_node(0).val.size());
        if (float* d = gx(0))
          for (int64_t i = 0; i < a; ++i) d[i] += gy[i];
        if (float* d = gx(1))
          for (int64_t i = 0; i < static_cast<int64_t>(in_node(1).val.size()); ++i)
            d[i] += gy[a + i];
        break;
      }
      case Op::ConcatCols: {
        const Shape& as = in_node(0).shape;
        const Shape& bs = in_node(1).shape;
        const int B = as[0], D1 = as[1], D2 = bs[1];
        if (float* d = gx(0))
          for (int r = 0; r < B; ++r)
            for (int i = 0; i < D1; ++i)
              d[static_cast<int64_t>(r) * D1 + i] += gy[static_cast<int64_t>(r) * (D1 + D2) + i];
        if (float* d = gx(1))
          for (int r = 0; r < B; ++r)
            for (int i = 0; i < D2; ++i)
              d[static_cast<int64_t>(r) * D2 + i] +=
                  gy[static_cast<int64_t>(r) * (D1 + D2) + D1 + i];
        break;
      }
      case Op::Softmax: {
        const Shape& xs = in_node(0).shape;
        const int B = xs[0], K = xs[1];
        const float* y = n.val.data();
        if (float* d = gx(0)) {
          for (int b = 0; b < B; ++b) {
            const float* yr = y + static_cast<int64_t>(b) * K;
            const float* gr = gy + static_cast<int64_t>(b) * K;
            double dot = 0.0;
            for (int k = 0; k < K; ++k) dot += static_cast<double>(gr[k]) * yr[k];
            float* dr = d + static_cast<int64_t>(b) * K;
            for (int k = 0; k < K; ++k)
              dr[k] += yr[k] * (gr[k] - static_cast<float>(dot));
          }
        }
        break;
      }
      case Op::LogSoftmax: {
        const Shape& xs = in_node(0).shape;
        const int B = xs[0], K = xs[1];
        const float* y = n.val.data();
        if (float* d = gx(0)) {
          for (int b = 0; b < B; ++b) {
            const float* yr = y + static_cast<int64_t>(b) * K;
            const float* gr = gy + static_cast<int64_t>(b) * K;
            double sum = 0.0;
            for (int k = 0; k < K; ++k) sum += static_cast<double>(gr[k]);
            float* dr = d + static_cast<int64_t>(b) * K;
            for (int k = 0; k < K; ++k)
              dr[k] += gr[k] - std::exp(yr[k]) * static_cast<float>(sum);
          }
        }
        break;
      }
      case Op::SumAll: {
        if (float* d = gx(0))
          for (int64_t i = 0; i < static_cast<int64_t>(in_node(0).val.size()); ++i) d[i] += gy[0];
        break;
      }
      case Op::MeanAll: {
        const int64_t m = static_cast<int64_t>(in_node(0).val.size());
        if (float* d = gx(0)) {
          const float g = gy[0] / static_cast<float>(m);
          for (int64_t i = 0; i < m; ++i) d[i] += g;
        }
        break;
      }
      case Op::RowEuclidean: {
        const Shape& as = in_node(0).shape;
        const int B = as.size() == 2 ? as[0] : 1;
        const int D = as.size() == 2 ? as[1] : as[0];
        const float* a = in_node(0).val.data();
        const float* b = in_node(1).val.data();
        float* da = gx(0);
        float* db = gx(1);
        for (int r = 0; r < B; ++r) {
          const float dist = n.val[static_cast<size_t>(r)];
          if (dist <= 0.0f) continue;  // subgradient 0 at coincident points
          const float g = gy[r] / dist;
          const int64_t off = static_cast<int64_t>(r) * D;
          for (int i = 0; i < D; ++i) {
            const float diff = a[off + i] - b[off + i];
            if (da) da[off + i] += g * diff;
            if (db) db[off + i] -= g * diff;
          }
        }
        break;
      }
      case Op::GatherRows: {
        const int D = n.shape[1];
        if (float* d = gx(0))
          for (size_t r = 0; r < n.iargs.size(); ++r)
            for (int i = 0; i < D; ++i)
              d[static_cast<int64_t>(n.iargs[r]) * D + i] += gy[static_cast<int64_t>(r) * D + i];
        break;
      }
      case Op::GroupMeanRows: {
        const Shape& xs = in_node(0).shape;
        const int B = xs[0], D = xs[1];
        if (float* d = gx(0)) {
          for (int i = 0; i < B; ++i) {
            const int slot = n.iargs[static_cast<size_t>(i)];
            const float inv = 1.0f / static_cast<float>(n.iargs[static_cast<size_t>(B + slot)]);
            for (int k = 0; k < D; ++k)
              d[static_cast<int64_t>(i) * D + k] += gy[static_cast<int64_t>(slot) * D + k] * inv;
          }
        }
        break;
      }
      case Op::PickNll: {
        const int K = in_node(0).shape[1];
        if (float* d = gx(0))
          for (size_t i = 0; i < n.iargs.size(); ++i)
            d[static_cast<int64_t>(i) * K + n.iargs[i]] -= n.fargs[i] * gy[i];
        break;
      }
      case Op::PickNegLog: {
        const int K = in_node(0).shape[1];
        const float* p = in_node(0).val.data();
        if (float* d = gx(0))
          for (size_t i = 0; i < n.iargs.size(); ++i) {
            const int64_t idx = static_cast<int64_t>(i) * K + n.iargs[i];
            d[idx] -= n.fargs[i] * gy[i] / p[idx];
          }
        break;
      }
      case Op::ReduceMax: {
        const int64_t m = static_cast<int64_t>(in_node(0).val.size());
        const float* x = in_node(0).val.data();
        if (float* d = gx(0)) {
          int64_t best = 0;  // first maximal index wins ties
          for (int64_t i = 1; i < m; ++i)
            if (x[i] > x[best]) best = i;
          d[best] += gy[0];
        }
        break;
      }
    }
  }

  for (int id = 0; id <= loss.id; ++id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.op == Op::Leaf && n.param != nullptr && !n.grad.empty()) {
      float* pg = n.param->grad.data.data();
      for (size_t i = 0; i < n.grad.size(); ++i) pg[i] += n.grad[i];
    }
  }
}

double Tape::eval_double(Var out, int leaf_id, int64_t elem, double delta) const {
  require(out.tape == this && out.id >= 0, "eval_double: bad output var");
  require(numel(nodes_[static_cast<size_t>(out.id)].shape) == 1,
          "eval_double: output must be scalar");
  std::vector<std::vector<double>> vals(static_cast<size_t>(out.id) + 1);
  for (int id = 0; id <= out.id; ++id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    auto& v = vals[static_cast<size_t>(id)];
    v.resize(n.val.size());
    if (n.op == Op::Leaf) {
      for (size_t i = 0; i < n.val.size(); ++i) v[i] = static_cast<double>(n.val[i]);
      if (id == leaf_id) {
        require(elem >= 0 && elem < static_cast<int64_t>(v.size()),
                "eval_double: element out of range");
        v[static_cast<size_t>(elem)] += delta;
      }
      continue;
    }
    std::vector<const double*> ins;
    std::vector<const Shape*> ishapes;
    for (int i : n.in) {
      if (i < 0) break;
      ins.push_back(vals[static_cast<size_t>(i)].data());
      ishapes.push_back(&nodes_[static_cast<size_t>(i)].shape);
    }
    eval_op<double>(n, ins, ishapes, v.data());
  }
  return vals[static_cast<size_t>(out.id)][0];
}

}  // namespace ecgda::ad
