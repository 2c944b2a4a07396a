#include "dhsi/nn/layers.hpp"

#include "dhsi/binary_io.hpp"

#include <cmath>

namespace dhsi::nn {

Mat xavier(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-a, a);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

Linear Linear::create(ParamSet& ps, const std::string& name, int in, int out, Rng& rng) {
  Linear l;
  l.weight = &ps.add(name + ".weight", xavier(in, out, rng));
  l.bias = &ps.add(name + ".bias", Mat::Zero(1, out));
  return l;
}

Linear Linear::bind(ParamSet& ps, const std::string& name) {
  return {&ps.get(name + ".weight"), &ps.get(name + ".bias")};
}

Var Linear::operator()(Tape& t, Var x) const {
  return add_rowvec(matmul(x, t.param(*weight)), t.param(*bias));
}

Mlp Mlp::create(ParamSet& ps, const std::string& name, int in, int hidden, int out, Rng& rng) {
  return {Linear::create(ps, name + ".0", in, hidden, rng), Linear::create(ps, name + ".1", hidden, out, rng)};
}

Var Mlp::operator()(Tape& t, Var x) const { return second(t, gelu(first(t, x))); }

LayerNorm LayerNorm::create(ParamSet& ps, const std::string& name, int dim) {
  return {&ps.add(name + ".gamma", Mat::Ones(1, dim)), &ps.add(name + ".beta", Mat::Zero(1, dim))};
}

Var LayerNorm::operator()(Tape& t, Var x) const { return layer_norm(x, t.param(*gamma), t.param(*beta)); }

MultiHeadAttention MultiHeadAttention::create(ParamSet& ps, const std::string& name, int width, int heads,
                                              Rng& rng) {
  require(heads >= 1 && width % heads == 0, ErrorKind::Config, "attention width must be divisible by heads");
  MultiHeadAttention m;
  m.q = Linear::create(ps, name + ".q", width, width, rng);
  m.k = Linear::create(ps, name + ".k", width, width, rng);
  m.v = Linear::create(ps, name + ".v", width, width, rng);
  m.out = Linear::create(ps, name + ".out", width, width, rng);
  m.heads = heads;
  return m;
}

Var MultiHeadAttention::operator()(Tape& t, Var x, bool causal) const {
  const Var qs = q(t, x), ks = k(t, x), vs = v(t, x);
  const int width = static_cast<int>(qs.cols());
  const int dh = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Var qh = slice_cols(qs, h * dh, dh);
    const Var kh = slice_cols(ks, h * dh, dh);
    const Var vh = slice_cols(vs, h * dh, dh);
    const Var att = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), causal);
    outs.push_back(matmul(att, vh));
  }
  return out(t, heads == 1 ? outs.front() : concat_cols(outs));
}

Transformer Transformer::create(ParamSet& ps, const std::string& name, const TransformerConfig& cfg, Rng& rng) {
  require(cfg.layers >= 1 && cfg.width >= 1 && cfg.ffn_mult >= 1, ErrorKind::Config, "invalid transformer config");
  Transformer tr;
  for (int i = 0; i < cfg.layers; ++i) {
    const std::string p = name + ".block" + std::to_string(i);
    tr.blocks.push_back({LayerNorm::create(ps, p + ".norm1", cfg.width), LayerNorm::create(ps, p + ".norm2", cfg.width),
                         MultiHeadAttention::create(ps, p + ".attn", cfg.width, cfg.heads, rng),
                         Mlp::create(ps, p + ".ffn", cfg.width, cfg.width * cfg.ffn_mult, cfg.width, rng)});
  }
  tr.final_norm = LayerNorm::create(ps, name + ".final_norm", cfg.width);
  return tr;
}

Var Transformer::operator()(Tape& t, Var x, bool causal) const {
  for (const auto& b : blocks) {
    x = add(x, b.attn(t, b.norm1(t, x), causal));
    x = add(x, b.ffn(t, b.norm2(t, x)));
  }
  return final_norm(t, x);
}

Mat sinusoidal_embedding(int step, int dim) {
  Mat e(1, dim);
  const int half = dim / 2;
  for (int i = 0; i < dim; ++i) {
    const int f = i % std::max(half, 1);
    const double freq = std::pow(1000.0, -static_cast<double>(f) / std::max(half, 1));
    e(0, i) = i < half ? std::sin(step * freq) : std::cos(step * freq);
  }
  return e;
}

void Adam::step(ParamSet& params) { step(std::vector<ParamSet*>{&params}); }

void Adam::step(const std::vector<ParamSet*>& sets) {
  std::vector<Parameter*> ps;
  for (auto* set : sets)
    for (auto& p : set->params()) ps.push_back(&p);
  if (m_.size() != ps.size()) {
    m_.clear();
    v_.clear();
    for (const auto* p : ps) {
      m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }
  double scale_factor = 1.0;
  if (cfg_.clip_norm > 0) {
    double sq = 0;
    for (const auto* p : ps) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) scale_factor = cfg_.clip_norm / norm;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = *ps[i];
    const Mat g = p.grad * scale_factor;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.value.array() -= cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
    p.grad.setZero();
  }
}

void write_params(std::ostream& out, const ParamSet& params) {
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.params().size()));
  for (const auto& p : params.params()) {
    bin::put_string(out, p.name);
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rows()));
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) bin::put<double>(out, p.value(r, c));
  }
}

void read_params(std::istream& in, ParamSet& params) {
  const auto n = bin::get<std::uint32_t>(in);
  require(n == params.params().size(), ErrorKind::Format, "parameter count mismatch");
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = bin::get_string(in, 1024);
    auto& p = params.get(name);
    const auto rows = bin::get<std::uint32_t>(in);
    const auto cols = bin::get<std::uint32_t>(in);
    require(rows == p.value.rows() && cols == p.value.cols(), ErrorKind::Format, "shape mismatch for " + name);
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = bin::get<double>(in);
  }
  require(params.all_finite(), ErrorKind::Format, "non-finite parameter values");
}

}  // namespace dhsi::nn
