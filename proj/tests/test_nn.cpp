#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "ccod/gradcheck.hpp"
#include "ccod/nn.hpp"

using namespace ccod;
using namespace ccod::nn;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Element-by-element re-implementation of the full network.
std::vector<double> scalar_forward(const NetworkParams& p, const Observation& obs,
                                   const std::vector<double>& extra = {}) {
  const NetShape& s = p.shape;
  const int H = s.hidden;
  std::vector<double> h(H, 0.0), c(H, 0.0);
  for (int t = 0; t < s.steps; ++t) {
    std::vector<double> pre(4 * H);
    for (int r = 0; r < 4 * H; ++r) {
      double acc = p[kLstmB](r, 0);
      for (int d = 0; d < s.input; ++d) acc += p[kLstmWx](r, d) * obs.values[t * s.input + d];
      for (int k = 0; k < H; ++k) acc += p[kLstmWh](r, k) * h[k];
      pre[r] = acc;
    }
    for (int j = 0; j < H; ++j) {
      const double i = sig(pre[j]);
      const double f = sig(pre[H + j]);
      const double g = std::tanh(pre[2 * H + j]);
      const double o = sig(pre[3 * H + j]);
      c[j] = f * c[j] + i * g;
      h[j] = o * std::tanh(c[j]);
    }
  }
  std::vector<double> z = h;
  z.insert(z.end(), extra.begin(), extra.end());
  auto dense = [&](int w, int b, const std::vector<double>& in, bool relu) {
    std::vector<double> out(p[w].rows());
    for (int r = 0; r < p[w].rows(); ++r) {
      double acc = p[b](r, 0);
      for (int k = 0; k < p[w].cols(); ++k) acc += p[w](r, k) * in[k];
      out[r] = relu ? std::max(acc, 0.0) : acc;
    }
    return out;
  };
  const auto a1 = dense(kDense1W, kDense1B, z, true);
  const auto a2 = dense(kDense2W, kDense2B, a1, true);
  return dense(kHeadW, kHeadB, a2, false);
}

NetShape q_shape() {
  NetShape s;
  s.outputs = 7;
  return s;
}

NetShape critic_shape() {
  NetShape s;
  s.extra = 1;
  return s;
}

}  // namespace

TEST(Forward, ZeroWeightsGiveHeadBias) {
  NetworkParams p(q_shape());
  for (int k = 0; k < 7; ++k) p[kHeadB](k, 0) = 0.1 * k - 0.3;
  std::mt19937_64 rng(1);
  const Vector out = forward(p, random_observation(NetShape{}, rng));
  for (int k = 0; k < 7; ++k) EXPECT_EQ(out(k), p[kHeadB](k, 0));
}

TEST(Forward, MatchesScalarReimplementation) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const NetworkParams p = NetworkParams::random(q_shape(), rng);
    const Observation o = random_observation(NetShape{}, rng);
    const Vector fast = forward(p, o);
    const auto slow = scalar_forward(p, o);
    for (int k = 0; k < 7; ++k) EXPECT_NEAR(fast(k), slow[k], 1e-10);
  }
}

TEST(Forward, CriticExtraInputMatchesScalarReimplementation) {
  std::mt19937_64 rng(29);
  const NetworkParams p = NetworkParams::random(critic_shape(), rng);
  const Observation o = random_observation(NetShape{}, rng);
  Vector a(1);
  a(0) = 0.37;
  EXPECT_NEAR(forward(p, o, &a)(0), scalar_forward(p, o, {0.37})[0], 1e-10);
}

TEST(Forward, BatchColumnsAreIndependent) {
  std::mt19937_64 rng(3);
  const NetworkParams p = NetworkParams::random(q_shape(), rng);
  std::vector<Observation> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(random_observation(NetShape{}, rng));
  const Matrix out = forward(p, batch);
  for (int i = 0; i < 5; ++i) {
    const Vector single = forward(p, batch[i]);
    for (int k = 0; k < 7; ++k) EXPECT_NEAR(out(k, i), single(k), 1e-14);
  }
}

TEST(Forward, IsPure) {
  std::mt19937_64 rng(5);
  const NetworkParams p = NetworkParams::random(q_shape(), rng);
  const Observation o = random_observation(NetShape{}, rng);
  EXPECT_EQ(forward(p, o), forward(p, o));
}

TEST(Forward, ShapeMismatch) {
  NetworkParams p(q_shape());
  Observation wrong(2);
  EXPECT_THROW(forward(p, wrong), ContractViolation);
  NetworkParams c(critic_shape());
  EXPECT_THROW(forward(c, Observation(3)), ContractViolation);
}

TEST(Backward, FiniteDifferences) {
  for (int seed = 0; seed < 4; ++seed) {
    const NetShape shape = seed % 2 ? critic_shape() : q_shape();
    const GradCheckReport r = gradient_check_instance(shape, 100 + seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed;
    if (shape.extra > 0) {
      EXPECT_LT(r.max_extra_rel_error, 1e-4);
    }
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradient) {
  std::mt19937_64 rng(8);
  const NetworkParams p = NetworkParams::random(q_shape(), rng);
  std::vector<Observation> batch{random_observation(NetShape{}, rng), random_observation(NetShape{}, rng)};
  ForwardCache fc;
  forward(p, batch, nullptr, &fc);
  const GradientSet g = backward(p, fc, Matrix::Zero(7, 2));
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(Backward, HeadBiasGradientIsUpstream) {
  std::mt19937_64 rng(9);
  const NetworkParams p = NetworkParams::random(q_shape(), rng);
  const Observation o = random_observation(NetShape{}, rng);
  ForwardCache fc;
  forward(p, std::span<const Observation>(&o, 1), nullptr, &fc);
  Matrix up(7, 1);
  up << 0.5, -1.0, 0.0, 2.0, 0.25, -0.125, 3.0;
  const GradientSet g = backward(p, fc, up);
  EXPECT_EQ(g[kHeadB], up);
}

TEST(Backward, RequiresCachedForward) {
  NetworkParams p(q_shape());
  ForwardCache fc;
  EXPECT_THROW(backward(p, fc, Matrix::Zero(7, 1)), ContractViolation);
  const Observation o(3);
  forward(p, std::span<const Observation>(&o, 1), nullptr, &fc);
  EXPECT_THROW(backward(p, fc, Matrix::Zero(6, 1)), ContractViolation);
  EXPECT_THROW(backward(p, fc, Matrix::Zero(7, 2)), ContractViolation);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::mt19937_64 rng(1);
  NetworkParams p = NetworkParams::random(q_shape(), rng);
  const NetworkParams before = p;
  Adam opt(p.shape);
  GradientSet g(p.shape);
  for (int i = 0; i < 10; ++i) opt.step(p, g, 1e-2);
  EXPECT_EQ(p, before);
}

TEST(Adam, MovesAgainstGradientSign) {
  NetShape tiny{1, 1, 1, 0, 1, 1, 1};
  NetworkParams p(tiny);
  Adam opt(tiny);
  GradientSet g(tiny);
  g[kHeadB](0, 0) = 3.0;
  g[kDense1W](0, 0) = -0.5;
  for (int i = 0; i < 100; ++i) opt.step(p, g, 1e-3);
  EXPECT_LT(p[kHeadB](0, 0), 0.0);
  EXPECT_GT(p[kDense1W](0, 0), 0.0);
  // A constant gradient makes every Adam step lr * (1 - tiny).
  EXPECT_NEAR(p[kHeadB](0, 0), -0.1, 1e-6);
}

TEST(Adam, QuadraticBowlDecreasesMonotonically) {
  std::mt19937_64 rng(12);
  NetworkParams p = NetworkParams::random(q_shape(), rng);
  const NetworkParams centre = NetworkParams::random(q_shape(), rng);
  Adam opt(p.shape);
  auto loss_and_grad = [&](GradientSet& g) {
    double loss = 0.0;
    for (int i = 0; i < kTensorCount; ++i) {
      g[i] = p[i] - centre[i];
      loss += 0.5 * g[i].squaredNorm();
    }
    return loss;
  };
  GradientSet g(p.shape);
  double prev = loss_and_grad(g);
  const double first = prev;
  for (int step = 0; step < 500; ++step) {
    opt.step(p, g, 4e-4);
    const double now = loss_and_grad(g);
    if (step >= 10) {
      EXPECT_LT(now, prev) << "step " << step;
    }
    prev = now;
  }
  EXPECT_LT(prev, first);
}

TEST(Adam, RejectsNonFiniteGradient) {
  NetworkParams p(q_shape());
  Adam opt(p.shape);
  GradientSet g(p.shape);
  g[kDense2W](3, 4) = std::nan("");
  const NetworkParams before = p;
  EXPECT_THROW(opt.step(p, g, 1e-3), TrainingError);
  EXPECT_EQ(p, before);
  EXPECT_EQ(opt.steps(), 0);
}

TEST(SoftUpdate, FullCopyAndIdentity) {
  std::mt19937_64 rng(2);
  const NetworkParams local = NetworkParams::random(q_shape(), rng);
  NetworkParams target = NetworkParams::random(q_shape(), rng);
  const NetworkParams before = target;
  soft_update(target, local, 0.0);
  EXPECT_EQ(target, before);
  soft_update(target, local, 1.0);
  EXPECT_EQ(target, local);
}

TEST(SoftUpdate, ContractsGeometrically) {
  std::mt19937_64 rng(6);
  const NetworkParams local = NetworkParams::random(q_shape(), rng);
  NetworkParams target = NetworkParams::random(q_shape(), rng);
  auto gap = [&] {
    double sq = 0.0;
    for (int i = 0; i < kTensorCount; ++i) sq += (target[i] - local[i]).squaredNorm();
    return std::sqrt(sq);
  };
  const double tau = 4e-3;
  double prev = gap();
  const double start = prev;
  for (int k = 1; k <= 1000; ++k) {
    soft_update(target, local, tau);
    const double now = gap();
    EXPECT_NEAR(now / prev, 1.0 - tau, 1e-12);
    prev = now;
  }
  EXPECT_NEAR(prev / start, std::pow(1.0 - tau, 1000), 1e-10);
  EXPECT_TRUE(target.all_finite());
}

TEST(SoftUpdate, Errors) {
  NetworkParams a(q_shape());
  NetworkParams b(critic_shape());
  EXPECT_THROW(soft_update(a, b, 0.5), ContractViolation);
  EXPECT_THROW(soft_update(a, a, 1.5), DomainError);
  EXPECT_THROW(soft_update(a, a, -0.1), DomainError);
}

TEST(Serialization, RoundTripIsBitExact) {
  std::mt19937_64 rng(77);
  NetworkParams p = NetworkParams::random(critic_shape(), rng);
  p[kHeadB](0, 0) = 1.0 / 3.0;
  p[kDense1B](5, 0) = -0.0;
  p[kDense1B](6, 0) = 5e-320;
  std::stringstream ss;
  save(ss, p);
  const NetworkParams q = load(ss);
  EXPECT_EQ(q.shape, p.shape);
  for (int i = 0; i < kTensorCount; ++i)
    for (Eigen::Index k = 0; k < p[i].size(); ++k)
      EXPECT_EQ(std::memcmp(&p[i].data()[k], &q[i].data()[k], sizeof(double)), 0);
}

TEST(Serialization, RejectsGarbage) {
  std::stringstream ss("not a network\n");
  EXPECT_THROW(load(ss), IoError);
}

TEST(GradCheck, TenInstances) {
  const GradCheckReport s = gradient_check(10, 2024);
  EXPECT_GT(s.checked, 80000);
  EXPECT_LT(s.max_rel_error, 1e-4);
  EXPECT_LT(s.max_extra_rel_error, 1e-4);
}
