#include "dhsi/nn/layers.hpp"
#include "gradcheck.hpp"

#include <doctest.h>

#include <sstream>

using namespace dhsi;
using namespace dhsi::nn;

namespace {

Mat randn(Eigen::Index r, Eigen::Index c, Rng& rng, double s = 1.0) {
  std::normal_distribution<double> n(0.0, s);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

}  // namespace

TEST_CASE("elementwise and structural ops have correct gradients") {
  Rng rng(1);
  ParamSet ps;
  auto& a = ps.add("a", randn(4, 5, rng));
  auto& b = ps.add("b", randn(5, 3, rng));
  auto& c = ps.add("c", randn(4, 3, rng));
  auto& row = ps.add("row", randn(1, 3, rng));
  auto& s = ps.add("s", randn(1, 1, rng));
  auto& col = ps.add("col", randn(4, 1, rng));
  const Mat target = (randn(4, 3, rng).array() * 0.3 + 0.5).cwiseMax(0.05).cwiseMin(0.95).matrix();

  auto loss = [&](Tape& t) {
    Var x = add_rowvec(matmul(t.param(a), t.param(b)), t.param(row));
    x = add(x, mul(t.param(c), tanh(x)));
    x = sub(gelu(x), scale_by(t.param(c), t.param(s)));
    x = scale_rows(x, t.param(col));
    Var y = concat_cols({slice_cols(x, 0, 2), exp(scale(slice_cols(x, 2, 1), 0.1))});
    y = concat_rows({slice_rows(y, 2, 2), slice_rows(y, 0, 2)});
    y = unflatten_row(flatten_row(y), 4, 3);
    Var p = sigmoid(y);
    return add(add(mse(y, t.constant(target)), bce(p, target)), scale(sum(square(softmax_rows(y))), 0.1));
  };
  CHECK(testing::max_grad_error(ps, loss) < 1e-6);
}

TEST_CASE("matmul_nt, causal softmax and layer norm gradients") {
  Rng rng(2);
  ParamSet ps;
  auto& q = ps.add("q", randn(5, 4, rng));
  auto& k = ps.add("k", randn(5, 4, rng));
  auto& g = ps.add("g", randn(1, 4, rng));
  auto& bta = ps.add("beta", randn(1, 4, rng));
  const Mat w = randn(5, 5, rng);
  auto loss = [&](Tape& t) {
    Var att = softmax_rows(matmul_nt(t.param(q), t.param(k)), true);
    Var ln = layer_norm(matmul(att, t.param(k)), t.param(g), t.param(bta));
    return add(mean(mul(att, t.constant(w))), mean(square(ln)));
  };
  CHECK(testing::max_grad_error(ps, loss) < 1e-6);
}

TEST_CASE("causal softmax masks the future") {
  Tape t;
  Rng rng(3);
  const Var s = softmax_rows(t.constant(randn(4, 4, rng)), true);
  for (int r = 0; r < 4; ++r) {
    CHECK(s.value().row(r).sum() == doctest::Approx(1.0));
    for (int c = r + 1; c < 4; ++c) CHECK(s.value()(r, c) == 0.0);
  }
}

TEST_CASE("transformer stack gradient check") {
  Rng rng(4);
  ParamSet ps;
  const TransformerConfig cfg{8, 2, 2, 2};
  const auto tr = Transformer::create(ps, "tr", cfg, rng);
  const auto head = Linear::create(ps, "head", 8, 3, rng);
  const Mat x = randn(6, 8, rng);
  const Mat y = randn(6, 3, rng);
  for (bool causal : {false, true}) {
    auto loss = [&](Tape& t) { return mse(head(t, tr(t, t.constant(x), causal)), t.constant(y)); };
    CHECK(testing::max_grad_error(ps, loss) < 1e-5);
  }
}

TEST_CASE("causal transformer output at a step ignores later tokens") {
  Rng rng(5);
  ParamSet ps;
  const auto tr = Transformer::create(ps, "tr", {8, 2, 2, 2}, rng);
  Mat x = randn(5, 8, rng);
  Tape t1;
  const Mat full = tr(t1, t1.constant(x), true).value();
  Tape t2;
  const Mat prefix = tr(t2, t2.constant(x.topRows(3)), true).value();
  CHECK((full.topRows(3) - prefix).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("bce clamps without producing non-finite values") {
  Tape t;
  ParamSet ps;
  auto& p = ps.add("p", Mat::Constant(1, 2, 1.0));
  const Var l = bce(t.param(p), Mat::Constant(1, 2, 1.0));
  CHECK(std::isfinite(l.scalar()));
  CHECK(l.scalar() < 1e-6);
  t.backward(l);
  CHECK(p.grad.allFinite());
}

TEST_CASE("adam decreases a quadratic") {
  Rng rng(6);
  ParamSet ps;
  auto& w = ps.add("w", randn(3, 3, rng));
  Adam opt({0.05, 0.9, 0.999, 1e-8, 0.0});
  double first = 0, last = 0;
  for (int i = 0; i < 200; ++i) {
    Tape t;
    const Var l = mean(square(t.param(w)));
    if (i == 0) first = l.scalar();
    last = l.scalar();
    t.backward(l);
    opt.step(ps);
  }
  CHECK(last < 0.01 * first);
}

TEST_CASE("parameter tensors round trip") {
  Rng rng(7);
  ParamSet a, b;
  Linear::create(a, "l", 3, 4, rng);
  Linear::create(b, "l", 3, 4, rng);
  std::stringstream ss;
  write_params(ss, a);
  read_params(ss, b);
  CHECK(a.get("l.weight").value == b.get("l.weight").value);

  ParamSet c;
  Linear::create(c, "l", 3, 5, rng);
  std::stringstream again;
  write_params(again, a);
  CHECK_THROWS_AS(read_params(again, c), Error);
}

TEST_CASE("tape rejects mixing tapes and bad shapes") {
  Tape t1, t2;
  const Var a = t1.constant(Mat::Ones(2, 2));
  const Var b = t2.constant(Mat::Ones(2, 2));
  CHECK_THROWS_AS(add(a, b), Error);
  CHECK_THROWS_AS(matmul(a, t1.constant(Mat::Ones(3, 1))), Error);
}
