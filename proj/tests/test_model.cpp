#include "inset/gradcheck.hpp"
#include "inset/model.hpp"
#include "inset/params.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace inset;

namespace {

constexpr ModelDims kSmall{2, 6, 5};

InsetParams random_params(ModelDims dims, ModelVariant v, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::Init);
  return InsetParams::init(dims, v, rng);
}

std::vector<double> flat(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Params, ShapesChainAndDefaults) {
  const InsetParams p = InsetParams::zeros(ModelDims{}, ModelVariant::Inset);
  EXPECT_EQ(p.dims.h, 64u);
  EXPECT_EQ(p.dims.h_d, 128u);
  EXPECT_EQ(kFullScaleDims.h, 256u);
  EXPECT_EQ(kFullScaleDims.h_d, 500u);
  EXPECT_EQ(p.phi_w.rows(), 2u);
  EXPECT_EQ(p.phi_w.cols(), 64u);
  EXPECT_EQ(p.theta1_w.rows(), 64u);
  EXPECT_EQ(p.theta1_w.cols(), 128u);
  EXPECT_EQ(p.out_w.rows(), 128u);
  EXPECT_EQ(p.out_w.cols(), 1u);
  EXPECT_NO_THROW(p.validate());
}

TEST(Params, InitIsBoundedByFanIn) {
  const InsetParams p = random_params(ModelDims{3, 16, 8}, ModelVariant::Inset, 1);
  for (double v : p.phi_w.values()) EXPECT_LE(std::abs(v), 1.0 / std::sqrt(3.0));
  for (double v : p.theta1_w.values()) EXPECT_LE(std::abs(v), 0.25);
  for (double v : p.out_b.values()) EXPECT_LE(std::abs(v), 1.0 / std::sqrt(8.0));
}

TEST(Params, ValidateRejectsWrongShape) {
  InsetParams p = InsetParams::zeros(kSmall, ModelVariant::Inset);
  p.theta2_w = Tensor(5, 5);
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

// ---- init_layer ----

TEST(InitLayer, ZeroWeightsGiveZeroEmbeddings) {
  const InsetParams p = InsetParams::zeros(kSmall, ModelVariant::Inset);
  Rng rng = make_rng(2, Stream::Data);
  EXPECT_EQ(init_layer(p, oracle::random_tensor(4, 2, rng)), Tensor(4, 6));
}

TEST(InitLayer, RowwiseRecomputationMatches) {
  const InsetParams p = random_params(kSmall, ModelVariant::Inset, 3);
  Rng rng = make_rng(3, Stream::Data);
  const Tensor x = oracle::random_tensor(5, 2, rng);
  const Tensor e = init_layer(p, x);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto row = oracle::embed_row(p, x, i);
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(e(i, c), row[c], 1e-15);
  }
}

TEST(InitLayer, PermutingRowsPermutesOutput) {
  const InsetParams p = random_params(kSmall, ModelVariant::Inset, 4);
  Rng rng = make_rng(4, Stream::Data);
  const Tensor x = oracle::random_tensor(7, 2, rng);
  const auto order = random_permutation(7, rng);
  EXPECT_EQ(init_layer(p, x.gather_rows(order)), init_layer(p, x).gather_rows(order));
}

TEST(InitLayer, DimensionMismatchRejected) {
  const InsetParams p = random_params(kSmall, ModelVariant::Inset, 5);
  EXPECT_THROW(init_layer(p, Tensor(4, 3)), ShapeError);
  EXPECT_THROW(init_layer(p, Tensor(0, 2)), ShapeError);
}

// ---- inset_energy ----

TEST(Energy, MatchesStraightLineOracleOnAllMasks) {
  for (ModelVariant v : {ModelVariant::Inset, ModelVariant::DeepSetsOnly}) {
    const InsetParams p = random_params(kSmall, v, 6);
    Rng rng = make_rng(6, Stream::Data);
    const Tensor x = oracle::random_tensor(3, 2, rng);
    for (std::uint64_t code = 0; code < 8; ++code) {
      const SubsetMask m = SubsetMask::from_bits(3, code);
      EXPECT_NEAR(inset_energy(p, x, m), oracle::energy(p, x, m), 1e-12) << "mask " << code;
    }
  }
}

TEST(Energy, ZeroWeightsGiveOutputBias) {
  InsetParams p = InsetParams::zeros(kSmall, ModelVariant::Inset);
  p.out_b(0, 0) = 0.37;
  Rng rng = make_rng(7, Stream::Data);
  const Tensor x = oracle::random_tensor(6, 2, rng);
  for (int t = 0; t < 10; ++t) EXPECT_EQ(inset_energy(p, x, oracle::random_mask(6, rng)), 0.37);
}

TEST(Energy, EmptyMaskUsesZeroPool) {
  const InsetParams p = random_params(kSmall, ModelVariant::Inset, 8);
  Rng rng = make_rng(8, Stream::Data);
  const Tensor x = oracle::random_tensor(4, 2, rng);
  EXPECT_NEAR(inset_energy(p, x, SubsetMask(4)), oracle::energy(p, x, SubsetMask(4)), 1e-12);
}

TEST(Energy, ExactlyInvariantUnderPermutation) {
  Rng rng = make_rng(9, Stream::Data);
  for (int t = 0; t < 100; ++t) {
    const InsetParams p = random_params(ModelDims{2, 16, 12}, t % 2 ? ModelVariant::DeepSetsOnly : ModelVariant::Inset, 100 + t);
    const SetSample s = oracle::random_sample(3 + std::size_t(t % 30), 2, 2, rng);
    const SubsetMask m = oracle::random_mask(s.n(), rng);
    const auto perm = random_permutation(s.n(), rng);
    const SetSample ps = s.permuted(perm);
    EXPECT_EQ(inset_energy(p, s.features, m), inset_energy(p, ps.features, m.permuted(perm)));
  }
}

TEST(Energy, MaskLengthMismatchRejected) {
  const InsetParams p = random_params(kSmall, ModelVariant::Inset, 10);
  EXPECT_THROW(inset_energy(p, Tensor(4, 2), SubsetMask(3)), ShapeError);
  EXPECT_THROW(inset_energy(p, Tensor(4, 3), SubsetMask(4)), ShapeError);
}

TEST(Energy, DeepSetsOnlyIgnoresElementsOutsideSubset) {
  Rng rng = make_rng(11, Stream::Data);
  int inset_changed = 0;
  for (int t = 0; t < 100; ++t) {
    const SetSample s = oracle::random_sample(8, 2, 3, rng);
    const SubsetMask m = s.target_mask();
    SetSample other = s;
    for (std::size_t i = 0; i < s.n(); ++i)
      if (!m.contains(i))
        for (std::size_t c = 0; c < 2; ++c) other.features(i, c) = 4.0 * uniform01(rng) - 2.0;
    const InsetParams ds = random_params(ModelDims{2, 16, 12}, ModelVariant::DeepSetsOnly, 200 + t);
    EXPECT_EQ(inset_energy(ds, s.features, m), inset_energy(ds, other.features, m));
    const InsetParams in = random_params(ModelDims{2, 16, 12}, ModelVariant::Inset, 200 + t);
    if (inset_energy(in, s.features, m) != inset_energy(in, other.features, m)) ++inset_changed;
  }
  EXPECT_GE(inset_changed, 99);
}

TEST(Energy, GradientsMatchFiniteDifferences) {
  Rng rng = make_rng(12, Stream::Data);
  for (ModelVariant v : {ModelVariant::Inset, ModelVariant::DeepSetsOnly}) {
    for (int t = 0; t < 5; ++t) {
      const InsetParams p = random_params(kSmall, v, 300 + t);
      const Tensor x = oracle::random_tensor(5, 2, rng);
      const SubsetMask m = oracle::random_mask(5, rng);
      Tape tape;
      const ParamVars pv = bind(tape, p);
      Var phi = init_layer(pv, tape.constant(x));
      Var f = inset_energy(pv, phi, superset_context(pv, phi), tape.constant(m.indicator_row()));
      tape.backward(f);
      const auto grads = collect_grads(pv);
      for (std::size_t k = 0; k < InsetParams::kTensorCount; ++k) {
        auto value = [&](std::span<const double> w) {
          InsetParams q = p;
          auto ts = q.tensors();
          std::copy(w.begin(), w.end(), ts[k]->values().begin());
          return inset_energy(q, x, m);
        };
        const auto g = flat(grads[k]);
        const auto r = finite_diff_check(value, std::span<const double>(g), flat(*p.tensors()[k]), 1e-5);
        EXPECT_TRUE(r.passed(1e-4)) << InsetParams::kNames[k] << " err " << r.max_rel_error;
      }
    }
  }
}

// ---- value-only path and incremental energies ----

TEST(EnergyBasis, AgreesWithTapedEnergy) {
  Rng rng = make_rng(13, Stream::Data);
  for (int t = 0; t < 20; ++t) {
    const InsetParams p = random_params(ModelDims{2, 16, 12}, ModelVariant::Inset, 400 + t);
    const Tensor x = oracle::random_tensor(20, 2, rng);
    const EnergyBasis b(p, x);
    const SubsetMask m = oracle::random_mask(20, rng);
    EXPECT_NEAR(b.energy(m), inset_energy(p, x, m), 1e-12);
  }
}

TEST(EnergyCache, AddThenRemoveRestoresEnergy) {
  Rng rng = make_rng(14, Stream::Data);
  const InsetParams p = random_params(kSmall, ModelVariant::Inset, 14);
  const Tensor x = oracle::random_tensor(8, 2, rng);
  EnergyCache c(p, x, SubsetMask::from_indices(8, {1, 4}));
  const double f0 = c.energy();
  c.apply(6, Toggle::Add);
  c.apply(6, Toggle::Remove);
  EXPECT_NEAR(c.energy(), f0, 1e-12);
}

TEST(EnergyCache, AddGainsMatchRecomputation) {
  Rng rng = make_rng(15, Stream::Data);
  const InsetParams p = random_params(kSmall, ModelVariant::Inset, 15);
  const Tensor x = oracle::random_tensor(8, 2, rng);
  const EnergyCache c(p, x, SubsetMask(8));
  for (std::size_t i = 0; i < 8; ++i) {
    const double full = oracle::energy(p, x, SubsetMask::from_indices(8, {i}));
    EXPECT_NEAR(c.toggled_energy(i, Toggle::Add), full, 1e-12);
  }
}

TEST(EnergyCache, MarginalGainsMatchRecomputation) {
  Rng rng = make_rng(16, Stream::Data);
  const InsetParams p = random_params(kSmall, ModelVariant::Inset, 16);
  const Tensor x = oracle::random_tensor(8, 2, rng);
  const SubsetMask m = oracle::random_mask(8, rng);
  const EnergyCache c(p, x, m);
  const auto g = c.marginal_gains();
  for (std::size_t i = 0; i < 8; ++i) {
    SubsetMask with = m, without = m;
    with.set(i, true);
    without.set(i, false);
    EXPECT_NEAR(g[i], oracle::energy(p, x, with) - oracle::energy(p, x, without), 1e-12);
  }
}

TEST(EnergyCache, InvalidTogglesRejected) {
  const InsetParams p = random_params(kSmall, ModelVariant::Inset, 17);
  EnergyCache c(p, Tensor(4, 2, 0.5), SubsetMask::from_indices(4, {2}));
  EXPECT_THROW(c.toggled_energy(2, Toggle::Add), std::invalid_argument);
  EXPECT_THROW(c.toggled_energy(1, Toggle::Remove), std::invalid_argument);
  EXPECT_THROW(c.apply(9, Toggle::Add), std::out_of_range);
}

// ---- EquiNet ----

TEST(EquiNet, MatchesStraightLineOracle) {
  Rng rng = make_rng(18, Stream::Data);
  for (ModelVariant v : {ModelVariant::Inset, ModelVariant::DeepSetsOnly}) {
    const InsetParams p = random_params(kSmall, v, 18);
    const Tensor x = oracle::random_tensor(6, 2, rng);
    const auto y = equinet_probs(p, x);
    const auto ref = oracle::equinet(p, x);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(EquiNet, ZeroWeightsGiveSigmoidOfBias) {
  InsetParams p = InsetParams::zeros(kSmall, ModelVariant::Inset);
  p.eq_out_b(0, 0) = -0.8;
  for (double y : equinet_probs(p, Tensor(5, 2, 1.0))) EXPECT_EQ(y, sigmoid(-0.8));
}

TEST(EquiNet, ExactlyEquivariant) {
  Rng rng = make_rng(19, Stream::Data);
  for (int t = 0; t < 100; ++t) {
    const InsetParams p = random_params(ModelDims{2, 16, 12}, ModelVariant::Inset, 500 + t);
    const Tensor x = oracle::random_tensor(3 + std::size_t(t % 25), 2, rng);
    const auto perm = random_permutation(x.rows(), rng);
    std::vector<std::size_t> inverse(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
    const auto y = equinet_probs(p, x);
    const auto yp = equinet_probs(p, x.gather_rows(inverse));
    for (std::size_t i = 0; i < x.rows(); ++i) EXPECT_EQ(y[i], yp[perm[i]]);
  }
}

TEST(EquiNet, DuplicateRowsGetIdenticalProbabilities) {
  const InsetParams p = random_params(kSmall, ModelVariant::Inset, 20);
  const Tensor x(4, 2, {0.3, -1.0, 0.3, -1.0, 2.0, 0.1, 0.3, -1.0});
  const auto y = equinet_probs(p, x);
  EXPECT_EQ(y[0], y[1]);
  EXPECT_EQ(y[0], y[3]);
}
