#include "dhsi/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dhsi::nn {

Parameter& ParamSet::add(const std::string& name, Mat init) {
  require(!index_.contains(name), ErrorKind::Config, "duplicate parameter " + name);
  index_[name] = params_.size();
  Mat grad = Mat::Zero(init.rows(), init.cols());
  params_.push_back({name, std::move(init), std::move(grad)});
  return params_.back();
}

Parameter& ParamSet::get(const std::string& name) {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorKind::Format, "missing parameter " + name);
  return params_[it->second];
}

const Parameter& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorKind::Format, "missing parameter " + name);
  return params_[it->second];
}

std::size_t ParamSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

bool ParamSet::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](const Parameter& p) { return p.value.allFinite(); });
}

void ParamSet::assign_from(const ParamSet& other) {
  for (auto& p : params_) {
    if (!other.contains(p.name)) continue;
    const auto& src = other.get(p.name);
    require(src.value.rows() == p.value.rows() && src.value.cols() == p.value.cols(), ErrorKind::Format,
            "shape mismatch for parameter " + p.name);
    p.value = src.value;
  }
}

Var Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Tape::param(Parameter& p) {
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
    if (nodes_[i].param == &p) return {this, i};
  Var v = push(p.value, true, nullptr);
  nodes_[v.id].param = &p;
  return v;
}

void Tape::accumulate(int id, const Mat& g) { accumulate_expr(id, g); }

Mat Tape::grad(Var v) const {
  const auto& n = nodes_[v.id];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  require(value(loss).size() == 1, ErrorKind::Input, "backward() needs a scalar loss");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[loss.id].grad = Mat::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    auto& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.param) n.param->grad += n.grad;
    // back() only accumulates into earlier nodes and never resizes nodes_
    if (n.back) n.back(*this, n.grad);
  }
}

namespace {

bool any_grad(Var a) { return a.tape->needs_grad(a); }
bool any_grad(Var a, Var b) { return a.tape->needs_grad(a) || b.tape->needs_grad(b); }

void check_same_tape(Var a, Var b) {
  require(a.tape == b.tape, ErrorKind::Input, "operands recorded on different tapes");
}

void check_shape(bool ok, const char* op) {
  require(ok, ErrorKind::Input, std::string("shape mismatch in ") + op);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

double gelu_value(double x) noexcept {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  check_shape(a.cols() == b.rows(), "matmul");
  Tape& t = *a.tape;
  return t.push(a.value() * b.value(), any_grad(a, b), [a, b](Tape& tp, const Mat& g) {
    if (tp.needs_grad(a)) tp.accumulate_expr(a.id, g * tp.value(b).transpose());
    if (tp.needs_grad(b)) tp.accumulate_expr(b.id, tp.value(a).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  check_same_tape(a, b);
  check_shape(a.cols() == b.cols(), "matmul_nt");
  Tape& t = *a.tape;
  return t.push(a.value() * b.value().transpose(), any_grad(a, b), [a, b](Tape& tp, const Mat& g) {
    if (tp.needs_grad(a)) tp.accumulate_expr(a.id, g * tp.value(b));
    if (tp.needs_grad(b)) tp.accumulate_expr(b.id, g.transpose() * tp.value(a));
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  return a.tape->push(a.value() + b.value(), any_grad(a, b), [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a.id, g);
    tp.accumulate(b.id, g);
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  return a.tape->push(a.value() - b.value(), any_grad(a, b), [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a.id, g);
    tp.accumulate_expr(b.id, -g);
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul");
  return a.tape->push(a.value().cwiseProduct(b.value()), any_grad(a, b), [a, b](Tape& tp, const Mat& g) {
    if (tp.needs_grad(a)) tp.accumulate_expr(a.id, g.cwiseProduct(tp.value(b)));
    if (tp.needs_grad(b)) tp.accumulate_expr(b.id, g.cwiseProduct(tp.value(a)));
  });
}

Var add_rowvec(Var a, Var row) {
  check_same_tape(a, row);
  check_shape(row.rows() == 1 && row.cols() == a.cols(), "add_rowvec");
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape->push(std::move(out), any_grad(a, row), [a, row](Tape& tp, const Mat& g) {
    tp.accumulate(a.id, g);
    if (tp.needs_grad(row)) tp.accumulate_expr(row.id, g.colwise().sum());
  });
}

Var scale(Var a, double s) {
  return a.tape->push(a.value() * s, any_grad(a), [a, s](Tape& tp, const Mat& g) { tp.accumulate_expr(a.id, g * s); });
}

Var scale_by(Var a, Var s) {
  check_same_tape(a, s);
  check_shape(s.rows() == 1 && s.cols() == 1, "scale_by");
  return a.tape->push(a.value() * s.scalar(), any_grad(a, s), [a, s](Tape& tp, const Mat& g) {
    if (tp.needs_grad(a)) tp.accumulate_expr(a.id, g * tp.value(s)(0, 0));
    if (tp.needs_grad(s)) tp.accumulate(s.id, Mat::Constant(1, 1, g.cwiseProduct(tp.value(a)).sum()));
  });
}

Var scale_rows(Var a, Var col) {
  check_same_tape(a, col);
  check_shape(col.cols() == 1 && col.rows() == a.rows(), "scale_rows");
  Mat out = col.value().col(0).asDiagonal() * a.value();
  return a.tape->push(std::move(out), any_grad(a, col), [a, col](Tape& tp, const Mat& g) {
    if (tp.needs_grad(a)) tp.accumulate_expr(a.id, tp.value(col).col(0).asDiagonal() * g);
    if (tp.needs_grad(col)) tp.accumulate_expr(col.id, g.cwiseProduct(tp.value(a)).rowwise().sum());
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::Input, "concat_cols of nothing");
  Tape& t = *parts.front().tape;
  const auto rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool grad = false;
  for (auto p : parts) {
    check_same_tape(parts.front(), p);
    check_shape(p.rows() == rows, "concat_cols");
    cols += p.cols();
    grad = grad || t.needs_grad(p);
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (auto p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.push(std::move(out), grad, [parts](Tape& tp, const Mat& g) {
    Eigen::Index off = 0;
    for (auto p : parts) {
      const auto n = tp.value(p).cols();
      if (tp.needs_grad(p)) tp.accumulate_expr(p.id, g.middleCols(off, n));
      off += n;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::Input, "concat_rows of nothing");
  Tape& t = *parts.front().tape;
  const auto cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool grad = false;
  for (auto p : parts) {
    check_same_tape(parts.front(), p);
    check_shape(p.cols() == cols, "concat_rows");
    rows += p.rows();
    grad = grad || t.needs_grad(p);
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (auto p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t.push(std::move(out), grad, [parts](Tape& tp, const Mat& g) {
    Eigen::Index off = 0;
    for (auto p : parts) {
      const auto n = tp.value(p).rows();
      if (tp.needs_grad(p)) tp.accumulate_expr(p.id, g.middleRows(off, n));
      off += n;
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  check_shape(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows");
  return a.tape->push(a.value().middleRows(start, count), any_grad(a), [a, start, count](Tape& tp, const Mat& g) {
    Mat full = Mat::Zero(tp.value(a).rows(), tp.value(a).cols());
    full.middleRows(start, count) = g;
    tp.accumulate(a.id, full);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  check_shape(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols");
  return a.tape->push(a.value().middleCols(start, count), any_grad(a), [a, start, count](Tape& tp, const Mat& g) {
    Mat full = Mat::Zero(tp.value(a).rows(), tp.value(a).cols());
    full.middleCols(start, count) = g;
    tp.accumulate(a.id, full);
  });
}

namespace {

Mat row_major_flat(const Mat& m) {
  Mat out(1, m.size());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(0, k++) = m(r, c);
  return out;
}

Mat row_major_unflat(const Mat& flat, Eigen::Index rows, Eigen::Index cols) {
  Mat out(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = flat(0, k++);
  return out;
}

}  // namespace

Var flatten_row(Var a) {
  return a.tape->push(row_major_flat(a.value()), any_grad(a), [a](Tape& tp, const Mat& g) {
    tp.accumulate(a.id, row_major_unflat(g, tp.value(a).rows(), tp.value(a).cols()));
  });
}

Var unflatten_row(Var a, Eigen::Index rows, Eigen::Index cols) {
  check_shape(a.rows() == 1 && a.cols() == rows * cols, "unflatten_row");
  return a.tape->push(row_major_unflat(a.value(), rows, cols), any_grad(a),
                      [a](Tape& tp, const Mat& g) { tp.accumulate(a.id, row_major_flat(g)); });
}

Var gelu(Var a) {
  Mat out = a.value().unaryExpr([](double x) { return gelu_value(x); });
  return a.tape->push(std::move(out), any_grad(a), [a](Tape& tp, const Mat& g) {
    const Mat d = tp.value(a).unaryExpr([](double x) {
      const double u = kGeluC * (x + 0.044715 * x * x * x);
      const double th = std::tanh(u);
      const double du = kGeluC * (1.0 + 3 * 0.044715 * x * x);
      return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
    });
    tp.accumulate_expr(a.id, g.cwiseProduct(d));
  });
}

Var tanh(Var a) {
  Mat out = a.value().array().tanh().matrix();
  Mat th = out;
  return a.tape->push(std::move(out), any_grad(a), [a, th](Tape& tp, const Mat& g) {
    tp.accumulate_expr(a.id, g.cwiseProduct((1.0 - th.array().square()).matrix()));
  });
}

Var sigmoid(Var a) {
  Mat out = a.value().unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  Mat s = out;
  return a.tape->push(std::move(out), any_grad(a), [a, s](Tape& tp, const Mat& g) {
    tp.accumulate_expr(a.id, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

Var exp(Var a) {
  Mat out = a.value().array().exp().matrix();
  Mat e = out;
  return a.tape->push(std::move(out), any_grad(a), [a, e](Tape& tp, const Mat& g) {
    tp.accumulate_expr(a.id, g.cwiseProduct(e));
  });
}

Var square(Var a) {
  return a.tape->push(a.value().array().square().matrix(), any_grad(a), [a](Tape& tp, const Mat& g) {
    tp.accumulate_expr(a.id, 2.0 * g.cwiseProduct(tp.value(a)));
  });
}

Var softmax_rows(Var a, bool causal) {
  const Mat& x = a.value();
  check_shape(!causal || x.rows() <= x.cols(), "softmax_rows(causal)");
  Mat s = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    // causal: row r attends to columns [0, r + (cols - rows)]
    const Eigen::Index n = causal ? r + 1 + (x.cols() - x.rows()) : x.cols();
    const double m = x.row(r).head(n).maxCoeff();
    double z = 0;
    for (Eigen::Index c = 0; c < n; ++c) z += (s(r, c) = std::exp(x(r, c) - m));
    s.row(r).head(n) /= z;
  }
  Mat keep = s;
  return a.tape->push(std::move(s), any_grad(a), [a, keep](Tape& tp, const Mat& g) {
    Mat d = keep.cwiseProduct(g);
    const Eigen::VectorXd dots = d.rowwise().sum();
    d -= keep.cwiseProduct(dots.replicate(1, keep.cols()));
    tp.accumulate(a.id, d);
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  const Mat& v = x.value();
  const auto n = v.cols();
  check_shape(gamma.rows() == 1 && gamma.cols() == n && beta.rows() == 1 && beta.cols() == n, "layer_norm");
  const Eigen::VectorXd mu = v.rowwise().mean();
  Mat xc = v.colwise() - mu;
  const Eigen::VectorXd inv_std = ((xc.array().square().rowwise().sum() / double(n)) + eps).rsqrt().matrix();
  Mat xhat = inv_std.asDiagonal() * xc;
  Mat out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  const bool grad = any_grad(x) || any_grad(gamma) || any_grad(beta);
  return x.tape->push(std::move(out), grad, [x, gamma, beta, xhat, inv_std, n](Tape& tp, const Mat& g) {
    if (tp.needs_grad(gamma)) tp.accumulate_expr(gamma.id, g.cwiseProduct(xhat).colwise().sum());
    if (tp.needs_grad(beta)) tp.accumulate_expr(beta.id, g.colwise().sum());
    if (tp.needs_grad(x)) {
      Mat dxhat = g;
      dxhat.array().rowwise() *= tp.value(gamma).row(0).array();
      const Eigen::VectorXd m1 = dxhat.rowwise().mean();
      const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
      Mat dx = dxhat;
      dx.colwise() -= m1;
      dx -= xhat.cwiseProduct(m2.replicate(1, n));
      tp.accumulate_expr(x.id, inv_std.asDiagonal() * dx);
    }
  });
}

Var sum(Var a) {
  return a.tape->push(Mat::Constant(1, 1, a.value().sum()), any_grad(a), [a](Tape& tp, const Mat& g) {
    tp.accumulate_expr(a.id, Mat::Constant(tp.value(a).rows(), tp.value(a).cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return a.tape->push(Mat::Constant(1, 1, a.value().mean()), any_grad(a), [a, n](Tape& tp, const Mat& g) {
    tp.accumulate_expr(a.id, Mat::Constant(tp.value(a).rows(), tp.value(a).cols(), g(0, 0) / n));
  });
}

Var mse(Var a, Var b) { return mean(square(sub(a, b))); }

Var bce(Var p, const Mat& target, double eps) {
  check_shape(p.rows() == target.rows() && p.cols() == target.cols(), "bce");
  const Mat& pv = p.value();
  const double n = static_cast<double>(pv.size());
  double total = 0;
  for (Eigen::Index i = 0; i < pv.size(); ++i) {
    const double q = std::clamp(pv(i), eps, 1.0 - eps);
    total -= target(i) * std::log(q) + (1.0 - target(i)) * std::log(1.0 - q);
  }
  return p.tape->push(Mat::Constant(1, 1, total / n), any_grad(p), [p, target, eps, n](Tape& tp, const Mat& g) {
    const Mat& v = tp.value(p);
    Mat d(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double q = v(i);
      // gradient is zero where the clamp is active
      d(i) = (q <= eps || q >= 1.0 - eps) ? 0.0 : (-target(i) / q + (1.0 - target(i)) / (1.0 - q)) / n;
    }
    tp.accumulate_expr(p.id, g(0, 0) * d);
  });
}

}  // namespace dhsi::nn
