#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "deblurflow/flow/path.hpp"

using namespace deblurflow;
using namespace deblurflow::flow;

namespace {

Image random_image(Shape s, std::uint64_t seed, double lo = 0, double hi = 1) {
  Rng rng(seed);
  Image img(s);
  for (auto& v : img.values()) v = rng.uniform(lo, hi);
  return img;
}

ImagePair random_pair(std::uint64_t seed, Shape s = {3, 8, 8}) {
  return make_pair("p", random_image(s, seed), random_image(s, seed + 1));
}

}  // namespace

TEST(Path, DeblurEndpoints) {
  const auto p = random_pair(1);
  EXPECT_EQ(sample_path(p, PathKind::kDeblurBlurToClean, 0.0, 3).x_t, p.sharp);
  EXPECT_EQ(sample_path(p, PathKind::kDeblurBlurToClean, 1.0, 3).x_t, p.blur);
}

TEST(Path, EndpointIdentityForEveryKind) {
  const auto p = random_pair(2);
  for (auto k : {PathKind::kGenNoiseToClean, PathKind::kDeblurBlurToClean, PathKind::kNoiseToResidual}) {
    const auto s0 = sample_path(p, k, 0.0, 9);
    const auto s1 = sample_path(p, k, 1.0, 9);
    EXPECT_EQ(s0.x_t, k == PathKind::kNoiseToResidual ? p.residual : p.sharp);
    EXPECT_EQ(s1.x_t, s1.endpoint);
  }
}

TEST(Path, ConstantImageArithmetic) {
  const auto p = make_pair("c", Image(1, 4, 4, 0.0), Image(1, 4, 4, 2.0));
  const auto s = sample_path(p, PathKind::kDeblurBlurToClean, 0.25, 0);
  for (double v : s.x_t.values()) EXPECT_DOUBLE_EQ(v, 0.5);
  for (double v : s.target_v.values()) EXPECT_DOUBLE_EQ(v, 2.0);
}

TEST(Path, InterpolantsAndTargets) {
  const auto p = random_pair(3);
  for (double t : {0.0, 0.1, 0.5, 0.77, 1.0}) {
    const auto g = sample_path(p, PathKind::kGenNoiseToClean, t, 11);
    const auto d = sample_path(p, PathKind::kDeblurBlurToClean, t, 11);
    const auto n = sample_path(p, PathKind::kNoiseToResidual, t, 11);
    for (long i = 0; i < p.sharp.size(); ++i) {
      const double x = p.sharp[i], y = p.blur[i], e = g.endpoint[i], r = y - x;
      EXPECT_NEAR(g.x_t[i], (1 - t) * x + t * e, 1e-12);
      EXPECT_NEAR(g.target_v[i], e - x, 1e-12);
      EXPECT_NEAR(d.x_t[i], (1 - t) * x + t * y, 1e-12);
      EXPECT_NEAR(d.target_v[i], y - x, 1e-12);
      EXPECT_NEAR(n.x_t[i], (1 - t) * r + t * n.endpoint[i], 1e-12);
      EXPECT_NEAR(n.target_v[i], n.endpoint[i] - r, 1e-12);
    }
    EXPECT_EQ(n.condition, p.blur);
    EXPECT_TRUE(g.condition.empty());
  }
}

TEST(Path, DeblurFieldIndependentOfTime) {
  const auto p = random_pair(4);
  EXPECT_EQ(sample_path(p, PathKind::kDeblurBlurToClean, 0.1, 1).target_v,
            sample_path(p, PathKind::kDeblurBlurToClean, 0.9, 2).target_v);
}

TEST(Path, NoiseDeterministicPerSeed) {
  const auto p = random_pair(5);
  EXPECT_EQ(sample_path(p, PathKind::kGenNoiseToClean, 0.3, 8).endpoint,
            sample_path(p, PathKind::kGenNoiseToClean, 0.3, 8).endpoint);
  EXPECT_NE(sample_path(p, PathKind::kGenNoiseToClean, 0.3, 8).endpoint,
            sample_path(p, PathKind::kGenNoiseToClean, 0.3, 9).endpoint);
}

TEST(Path, RejectsTimeOutsideUnitInterval) {
  const auto p = random_pair(6);
  EXPECT_THROW(sample_path(p, PathKind::kDeblurBlurToClean, -0.01, 0), InvalidArgument);
  EXPECT_THROW(sample_path(p, PathKind::kDeblurBlurToClean, 1.01, 0), InvalidArgument);
  EXPECT_THROW(parse_path_kind("x-y"), InvalidArgument);
}

TEST(Loss, FlowMatchingBasics) {
  const auto p = random_pair(7);
  const auto s = sample_path(p, PathKind::kGenNoiseToClean, 0.4, 1);
  EXPECT_EQ(flow_matching_loss(s.target_v, s), 0.0);
  Image off = s.target_v;
  for (auto& v : off.values()) v += 1.0;
  EXPECT_NEAR(flow_matching_loss(off, s), 1.0, 1e-12);
  EXPECT_THROW(flow_matching_loss(Image(3, 4, 4), s), InvalidArgument);
}

TEST(Loss, FlowMatchingMatchesDoubleLoopOracle) {
  const Shape sh{1, 4, 4};
  const auto p = make_pair("q", random_image(sh, 1), random_image(sh, 2));
  const auto s = sample_path(p, PathKind::kGenNoiseToClean, 0.6, 3);
  const auto pred = random_image(sh, 4, -2, 2);
  double acc = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double d = pred(0, i, j) - s.target_v(0, i, j);
      acc += d * d;
    }
  EXPECT_NEAR(flow_matching_loss(pred, s), acc / 16.0, 1e-12);
}

TEST(Loss, ResidualLossBasics) {
  const auto p = random_pair(8);
  EXPECT_EQ(residual_loss(p.residual, p), 0.0);
  double ms = 0;
  for (double v : p.residual.values()) ms += v * v;
  EXPECT_NEAR(residual_loss(Image(p.sharp.shape()), p), ms / p.residual.size(), 1e-14);
  EXPECT_THROW(residual_loss(Image(1, 8, 8), p), InvalidArgument);
}

TEST(Loss, DeblurFlowLossEqualsResidualLossBitwise) {
  for (std::uint64_t k = 0; k < 100; ++k) {
    const auto p = random_pair(100 + k);
    const auto s = sample_path(p, PathKind::kDeblurBlurToClean, draw_time(TimeSchedule::kUniform01, k), k);
    const auto pred = random_image(p.sharp.shape(), 900 + k, -1, 1);
    ASSERT_EQ(flow_matching_loss(pred, s), residual_loss(pred, p));
  }
}

TEST(Loss, InvariantUnderJointPermutation) {
  const auto p = random_pair(9);
  const auto s = sample_path(p, PathKind::kGenNoiseToClean, 0.5, 2);
  const auto pred = random_image(p.sharp.shape(), 3, -1, 1);
  std::vector<long> perm(static_cast<size_t>(pred.size()));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(4);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  Image pp(pred.shape());
  PathSample sp = s;
  for (long i = 0; i < pred.size(); ++i) {
    pp[i] = pred[perm[i]];
    sp.target_v[i] = s.target_v[perm[i]];
  }
  EXPECT_NEAR(flow_matching_loss(pp, sp), flow_matching_loss(pred, s), 1e-14);
}

TEST(Time, UniformMeanNearHalf) {
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += draw_time(TimeSchedule::kUniform01, derive_seed(77, i));
  EXPECT_GE(sum / n, 0.495);
  EXPECT_LE(sum / n, 0.505);
}

TEST(Time, DeterministicAndInRange) {
  EXPECT_EQ(draw_time(TimeSchedule::kLogitNormal, 5), draw_time(TimeSchedule::kLogitNormal, 5));
  for (int i = 0; i < 10000; ++i) {
    const double t = draw_time(TimeSchedule::kLogitNormal, derive_seed(3, i));
    ASSERT_GT(t, 0.0);
    ASSERT_LT(t, 1.0);
  }
  EXPECT_THROW(parse_time_schedule("beta"), InvalidArgument);
}
