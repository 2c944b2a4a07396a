#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records every operation of one forward pass; backward() walks it in
// reverse and accumulates gradients into the leaves. Parameters live in a
// ParamSet and receive gradients through Tape::param().

#include "dhsi/common.hpp"

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace dhsi::nn {

using Mat = Eigen::MatrixXd;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
};

// Ordered collection of named parameters. References stay valid as parameters are added.
class ParamSet {
 public:
  Parameter& add(const std::string& name, Mat init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::deque<Parameter>& params() noexcept { return params_; }
  const std::deque<Parameter>& params() const noexcept { return params_; }
  std::size_t scalar_count() const noexcept;
  void zero_grad();
  bool all_finite() const;

  // Copies values for every name present in both sets; shapes must agree.
  void assign_from(const ParamSet& other);

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  Var param(Parameter& p);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  // Gradient of the last backward() target with respect to v (zeros if unreached).
  Mat grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 for a 1x1 loss and propagates to every leaf.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by op implementations.
  Var push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> back);
  void accumulate(int id, const Mat& g);
  template <typename Expr>
  void accumulate_expr(int id, const Expr& g) {
    auto& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    std::function<void(Tape&, const Mat&)> back;
  };
  std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return tape->value(*this); }

// --- operations --------------------------------------------------------------

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var add_rowvec(Var a, Var row);  // broadcast a 1 x n row over every row of a
Var scale(Var a, double s);
Var scale_by(Var a, Var s);  // s is 1x1
Var scale_rows(Var a, Var col);  // row r of a times col(r, 0)
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
// Row-major flatten into a 1 x (rows*cols) row, and its inverse.
Var flatten_row(Var a);
Var unflatten_row(Var a, Eigen::Index rows, Eigen::Index cols);

Var gelu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var square(Var a);
Var softmax_rows(Var a, bool causal = false);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

Var sum(Var a);
Var mean(Var a);
// Mean of squared differences over all entries.
Var mse(Var a, Var b);
// Mean binary cross-entropy of probabilities p against constant targets in [0,1].
// p is clamped to [eps, 1 - eps] inside the log.
Var bce(Var p, const Mat& target, double eps = 1e-7);

// Reference helpers usable outside a tape (inference paths and oracles).
double gelu_value(double x) noexcept;

}  // namespace dhsi::nn
