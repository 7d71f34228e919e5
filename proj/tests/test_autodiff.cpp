#include "inset/adam.hpp"
#include "inset/gradcheck.hpp"
#include "inset/rng.hpp"
#include "inset/tape.hpp"
#include "inset/tensor.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>

using namespace inset;

namespace {

std::vector<double> flat(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor from_flat(std::size_t r, std::size_t c, std::span<const double> v) {
  return Tensor(r, c, std::vector<double>(v.begin(), v.end()));
}

}  // namespace

TEST(Tensor, ShapeAndDataLength) {
  Tensor t(3, 2);
  EXPECT_EQ(t.rows(), 3u);
  EXPECT_EQ(t.cols(), 2u);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(Tensor(2, 2, std::vector<double>{1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(Tensor::row({1, 2}).item(), std::invalid_argument);
}

TEST(Tensor, CanonicalSumIgnoresOrder) {
  Rng rng = make_rng(1, Stream::Data);
  std::vector<double> v(200);
  for (double& x : v) x = (uniform01(rng) - 0.5) * std::pow(10.0, 8.0 * uniform01(rng));
  const double ref = canonical_sum_copy(v);
  for (int t = 0; t < 20; ++t) {
    const auto perm = random_permutation(v.size(), rng);
    std::vector<double> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) w[perm[i]] = v[i];
    EXPECT_EQ(canonical_sum_copy(w), ref);
  }
}

TEST(Primitive, ReluExample) {
  Tape tape;
  Var x = tape.constant(Tensor::row({-2, 0, 3}));
  EXPECT_EQ(relu(x).value(), Tensor::row({0, 0, 3}));
}

TEST(Primitive, SigmoidAtZero) {
  Tape tape;
  EXPECT_EQ(sigmoid(tape.constant(Tensor::row({0}))).value().item(), 0.5);
}

TEST(Primitive, RowSumExample) {
  Tape tape;
  Var x = tape.constant(Tensor(3, 2, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(row_sum(x).value(), Tensor::row({9, 12}));
}

TEST(Primitive, RowSumIsExactlyPermutationInvariant) {
  Rng rng = make_rng(2, Stream::Data);
  for (int t = 0; t < 50; ++t) {
    const Tensor x = oracle::random_tensor(37, 5, rng, -1e3, 1e3);
    const auto perm = random_permutation(x.rows(), rng);
    Tape tape;
    const Tensor a = row_sum(tape.constant(x)).value();
    const Tensor b = row_sum(tape.constant(x.gather_rows(perm))).value();
    EXPECT_EQ(a, b);
  }
}

TEST(Primitive, MaskedRowSumSelectsRows) {
  Tape tape;
  Var x = tape.constant(Tensor(3, 2, {1, 2, 3, 4, 5, 6}));
  Var m = tape.constant(Tensor(2, 3, {1, 0, 1, 0, 0, 0}));
  EXPECT_EQ(masked_row_sum(x, m).value(), Tensor(2, 2, {6, 8, 0, 0}));
}

TEST(Primitive, ShapeMismatchNamesOpAndShapes) {
  Tape tape;
  Var a = tape.constant(Tensor(2, 3));
  Var b = tape.constant(Tensor(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("(2x3)"), std::string::npos);
  }
  EXPECT_THROW(add(a, tape.constant(Tensor(3, 2))), ShapeError);
  EXPECT_THROW(add_row(a, tape.constant(Tensor(1, 2))), ShapeError);
  EXPECT_THROW(mul_col(a, tape.constant(Tensor(3, 1))), ShapeError);
  EXPECT_THROW(masked_row_sum(a, tape.constant(Tensor(1, 3))), ShapeError);
  EXPECT_THROW(bce(a, tape.constant(Tensor(1, 1))), ShapeError);
}

TEST(Primitive, InputsFromAnotherTapeRejected) {
  Tape t1, t2;
  Var a = t1.constant(Tensor(1, 1));
  Var b = t2.constant(Tensor(1, 1));
  EXPECT_THROW(add(a, b), std::invalid_argument);
}

TEST(Primitive, BceClampsBeforeLog) {
  Tape tape;
  Var p = tape.constant(Tensor::row({0.0, 1.0}));
  Var t = tape.constant(Tensor::row({1.0, 0.0}));
  const double v = bce(p, t).value().item();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, -2.0 * std::log(kProbClamp), 1e-9);
}

TEST(Backward, ReluSumGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor::row({-1, 2}));
  Var loss = sum(relu(x));
  tape.backward(loss);
  EXPECT_EQ(x.grad(), Tensor::row({0, 1}));
}

TEST(Backward, SigmoidQuarterSlope) {
  Tape tape;
  Var w = tape.leaf(Tensor::scalar(0.0));
  Var x = tape.constant(Tensor::scalar(1.0));
  tape.backward(sigmoid(matmul(w, x)));
  EXPECT_DOUBLE_EQ(w.grad().item(), 0.25);
}

TEST(Backward, NonScalarLossRejected) {
  Tape tape;
  Var x = tape.leaf(Tensor::row({1, 2}));
  EXPECT_THROW(tape.backward(relu(x)), ShapeError);
}

TEST(Backward, UnreachedLeafGetsZeroGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor::row({1, 2}));
  Var unused = tape.leaf(Tensor(2, 2, 3.0));
  tape.backward(sum(x));
  EXPECT_EQ(unused.grad(), Tensor(2, 2));
}

TEST(Backward, RepeatedRunsAreBitwiseIdentical) {
  Rng rng = make_rng(3, Stream::Init);
  Tape tape;
  Var w1 = tape.leaf(oracle::random_tensor(3, 4, rng));
  Var w2 = tape.leaf(oracle::random_tensor(4, 1, rng));
  Var x = tape.constant(oracle::random_tensor(5, 3, rng));
  Var loss = sum(sigmoid(matmul(relu(matmul(x, w1)), w2)));
  tape.backward(loss);
  const Tensor g1 = w1.grad(), g2 = w2.grad();
  tape.backward(loss);
  EXPECT_EQ(w1.grad(), g1);
  EXPECT_EQ(w2.grad(), g2);
}

// ---- finite differences ----

TEST(FiniteDiff, QuadraticIsExact) {
  auto f = [](std::span<const double> x) { return x[0] * x[0]; };
  const std::vector<double> g{6.0};
  const auto r = finite_diff_check(f, std::span<const double>(g), {3.0}, 1e-5);
  EXPECT_TRUE(r.passed(1e-6)) << r.max_rel_error;
}

TEST(FiniteDiff, NonFiniteEvaluationIsFailure) {
  auto f = [](std::span<const double> x) { return std::log(x[0]); };
  const std::vector<double> g{1.0};
  const auto r = finite_diff_check(f, std::span<const double>(g), {0.0}, 1e-5);
  EXPECT_FALSE(r.finite);
  EXPECT_FALSE(r.passed(1.0));
}

TEST(FiniteDiff, KinkIsNotSupported) {
  // |x| at 0: central difference gives 0, any one-sided analytic value is off by 1
  auto f = [](std::span<const double> x) { return std::abs(x[0]); };
  const std::vector<double> g{1.0};
  const auto r = finite_diff_check(f, std::span<const double>(g), {0.0}, 1e-5);
  EXPECT_FALSE(r.passed(1e-4));
}

namespace {

/// A primitive under test: builds its output from leaf inputs of the given shapes.
struct PrimCase {
  std::string name;
  std::vector<std::array<std::size_t, 2>> shapes;
  std::function<Var(Tape&, std::vector<Var>&)> build;
  std::function<Tensor(std::size_t, std::size_t, Rng&)> draw;
};

Tensor away_from_zero(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = oracle::random_tensor(r, c, rng);
  for (double& v : t.values()) v = (v < 0 ? -1.0 : 1.0) * (0.05 + std::abs(v));
  return t;
}

Tensor probs(std::size_t r, std::size_t c, Rng& rng) { return oracle::random_tensor(r, c, rng, 0.05, 0.95); }

Tensor bits(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (double& v : t.values()) v = uniform01(rng) < 0.5 ? 0.0 : 1.0;
  return t;
}

/// loss = sum(out * R) for a fixed random R so every output entry matters.
double check_case(const PrimCase& pc, Rng& rng) {
  std::vector<Tensor> inputs;
  for (std::size_t k = 0; k < pc.shapes.size(); ++k)
    inputs.push_back(pc.draw ? pc.draw(pc.shapes[k][0], pc.shapes[k][1], rng)
                             : oracle::random_tensor(pc.shapes[k][0], pc.shapes[k][1], rng));
  Tensor weights;
  auto eval = [&](const std::vector<Tensor>& in, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : in) vars.push_back(tape.leaf(t));
    Var out = pc.build(tape, vars);
    if (weights.empty()) weights = oracle::random_tensor(out.value().rows(), out.value().cols(), rng);
    Var loss = sum(mul(out, tape.constant(weights)));
    if (grads) {
      tape.backward(loss);
      for (Var& v : vars) grads->push_back(v.grad());
    }
    return loss.value().item();
  };
  std::vector<Tensor> grads;
  eval(inputs, &grads);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto value = [&](std::span<const double> x) {
      std::vector<Tensor> in = inputs;
      in[k] = from_flat(inputs[k].rows(), inputs[k].cols(), x);
      return eval(in, nullptr);
    };
    const auto g = flat(grads[k]);
    const auto r = finite_diff_check(value, std::span<const double>(g), flat(inputs[k]), 1e-5);
    EXPECT_TRUE(r.finite) << pc.name;
    worst = std::max(worst, r.max_rel_error);
  }
  return worst;
}

std::vector<PrimCase> primitive_cases() {
  using V = std::vector<Var>;
  return {
      {"matmul", {{3, 4}, {4, 2}}, [](Tape&, V& v) { return matmul(v[0], v[1]); }, {}},
      {"add", {{3, 2}, {3, 2}}, [](Tape&, V& v) { return add(v[0], v[1]); }, {}},
      {"sub", {{3, 2}, {3, 2}}, [](Tape&, V& v) { return sub(v[0], v[1]); }, {}},
      {"mul", {{3, 2}, {3, 2}}, [](Tape&, V& v) { return mul(v[0], v[1]); }, {}},
      {"add_row", {{4, 3}, {1, 3}}, [](Tape&, V& v) { return add_row(v[0], v[1]); }, {}},
      {"mul_col", {{4, 3}, {4, 1}}, [](Tape&, V& v) { return mul_col(v[0], v[1]); }, {}},
      {"relu", {{4, 3}}, [](Tape&, V& v) { return relu(v[0]); }, away_from_zero},
      {"sigmoid", {{4, 3}}, [](Tape&, V& v) { return sigmoid(v[0]); }, {}},
      {"row_sum", {{5, 3}}, [](Tape&, V& v) { return row_sum(v[0]); }, {}},
      {"sum", {{5, 3}}, [](Tape&, V& v) { return sum(v[0]); }, {}},
      {"scale", {{2, 3}}, [](Tape&, V& v) { return scale(v[0], -1.7); }, {}},
      {"logsumexp", {{6, 1}}, [](Tape&, V& v) { return logsumexp(v[0]); }, {}},
      {"masked_row_sum",
       {{5, 3}},
       [](Tape& t, V& v) { return masked_row_sum(v[0], t.constant(Tensor(2, 5, {1, 0, 1, 1, 0, 0, 1, 1, 0, 1}))); },
       {}},
      {"bce", {{4, 1}, {4, 1}}, [](Tape&, V& v) { return bce(v[0], v[1]); }, probs},
  };
}

}  // namespace

TEST(FiniteDiff, EveryPrimitiveOnHundredRandomInstances) {
  Rng rng = make_rng(4, Stream::Data);
  for (const PrimCase& pc : primitive_cases()) {
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) worst = std::max(worst, check_case(pc, rng));
    EXPECT_LE(worst, 1e-4) << pc.name;
  }
}

TEST(FiniteDiff, BceWithBinaryTargets) {
  Rng rng = make_rng(5, Stream::Data);
  const Tensor target = bits(6, 1, rng);
  const PrimCase pc{"bce-binary",
                    {{6, 1}},
                    [target](Tape& t, std::vector<Var>& v) { return bce(v[0], t.constant(target)); },
                    probs};
  for (int k = 0; k < 20; ++k) EXPECT_LE(check_case(pc, rng), 1e-4);
}

TEST(FiniteDiff, TwoLayerNetwork) {
  Rng rng = make_rng(6, Stream::Init);
  for (int t = 0; t < 20; ++t) {
    const Tensor x = oracle::random_tensor(5, 3, rng);
    std::vector<Tensor> p{oracle::random_tensor(3, 8, rng), oracle::random_tensor(1, 8, rng),
                          oracle::random_tensor(8, 1, rng), oracle::random_tensor(1, 1, rng)};
    auto eval = [&](const std::vector<Tensor>& ps, std::vector<Tensor>* grads) {
      Tape tape;
      std::vector<Var> v;
      for (const Tensor& q : ps) v.push_back(tape.leaf(q));
      Var hid = relu(linear(tape.constant(x), v[0], v[1]));
      Var loss = sum(sigmoid(linear(hid, v[2], v[3])));
      if (grads) {
        tape.backward(loss);
        for (Var& q : v) grads->push_back(q.grad());
      }
      return loss.value().item();
    };
    std::vector<Tensor> grads;
    eval(p, &grads);
    for (std::size_t k = 0; k < p.size(); ++k) {
      auto value = [&](std::span<const double> w) {
        std::vector<Tensor> ps = p;
        ps[k] = from_flat(p[k].rows(), p[k].cols(), w);
        return eval(ps, nullptr);
      };
      const auto g = flat(grads[k]);
      const auto r = finite_diff_check(value, std::span<const double>(g), flat(p[k]), 1e-5);
      EXPECT_TRUE(r.passed(1e-4)) << "param " << k << " err " << r.max_rel_error;
    }
  }
}

// ---- Adam ----

TEST(Adam, DefaultHyperparameters) {
  const AdamHyper h;
  EXPECT_EQ(h.lr, 1e-4);
  EXPECT_EQ(h.weight_decay, 1e-5);
}

TEST(Adam, ZeroGradientWithoutDecayLeavesParameters) {
  AdamHyper h;
  h.weight_decay = 0.0;
  AdamState st(h);
  Tensor p = Tensor::row({1.0, -2.0, 3.0});
  const Tensor before = p;
  std::array<Tensor*, 1> ps{&p};
  const std::vector<Tensor> g{Tensor(1, 3)};
  for (int k = 0; k < 5; ++k) adam_step(ps, g, st);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 5u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamHyper h;
  h.weight_decay = 0.0;
  AdamState st(h);
  Tensor p = Tensor::scalar(0.5);
  std::array<Tensor*, 1> ps{&p};
  adam_step(ps, std::vector<Tensor>{Tensor::scalar(1.0)}, st);
  // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
  EXPECT_NEAR(p.item(), 0.5 - h.lr / (1.0 + h.eps), 1e-15);
}

TEST(Adam, MatchesHandRecurrenceOverSeveralSteps) {
  AdamHyper h;
  h.lr = 0.01;
  h.weight_decay = 0.1;
  AdamState st(h);
  Tensor p = Tensor::scalar(2.0);
  std::array<Tensor*, 1> ps{&p};
  double x = 2.0, m = 0.0, v = 0.0;
  const double gs[] = {0.3, -1.2, 0.7, 2.5};
  for (int t = 1; t <= 4; ++t) {
    const double g = gs[t - 1];
    adam_step(ps, std::vector<Tensor>{Tensor::scalar(g)}, st);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    x -= 0.01 * (mh / (std::sqrt(vh) + 1e-8) + 0.1 * x);
    EXPECT_NEAR(p.item(), x, 1e-14);
  }
  EXPECT_EQ(st.step, 4u);
}

TEST(Adam, MomentShapesFollowParameters) {
  AdamState st;
  Tensor a(2, 3), b(1, 4);
  std::array<Tensor*, 2> ps{&a, &b};
  adam_step(ps, std::vector<Tensor>{Tensor(2, 3, 1.0), Tensor(1, 4, 1.0)}, st);
  ASSERT_EQ(st.m.size(), 2u);
  EXPECT_TRUE(st.m[0].same_shape(a));
  EXPECT_TRUE(st.v[1].same_shape(b));
  EXPECT_THROW(adam_step(ps, std::vector<Tensor>{Tensor(3, 2), Tensor(1, 4)}, st), std::invalid_argument);
  EXPECT_THROW(adam_step(ps, std::vector<Tensor>{Tensor(2, 3)}, st), std::invalid_argument);
}

TEST(Adam, MinimizesQuadratic) {
  AdamHyper h;
  h.lr = 0.05;
  h.weight_decay = 0.0;
  AdamState st(h);
  Tensor p = Tensor::row({3.0, -4.0});
  std::array<Tensor*, 1> ps{&p};
  for (int k = 0; k < 2000; ++k) {
    Tensor g = p;
    for (double& v : g.values()) v *= 2.0;
    adam_step(ps, std::vector<Tensor>{g}, st);
  }
  EXPECT_NEAR(p[0], 0.0, 1e-3);
  EXPECT_NEAR(p[1], 0.0, 1e-3);
}
