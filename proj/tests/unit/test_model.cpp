#include <gtest/gtest.h>

#include <cmath>

#include "deblurflow/flow/path.hpp"
#include "deblurflow/model/lora.hpp"
#include "deblurflow/model/time_embedding.hpp"
#include "deblurflow/model/vector_field_net.hpp"
#include "gradcheck.hpp"

using namespace deblurflow;
using namespace deblurflow::model;

namespace {

Tensor3<double> random_latent(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor3<double> z(s);
  for (auto& v : z.values()) v = rng.normal();
  return z;
}

NetArch small_arch() {
  NetArch a;
  a.latent_channels = 4;
  a.width = 16;
  a.depth = 2;
  a.heads = 2;
  a.time_embed_dim = 8;
  return a;
}

void randomize_adapters(VectorFieldNet<double>& net, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  testutil::randomize(net.adapter_params(), rng, scale);
}

}  // namespace

TEST(TimeEmbedding, ZeroTimeIsSinZeroCosOne) {
  const auto e = time_embedding(0.0, 16);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(e[i], 0.0);
  for (int i = 8; i < 16; ++i) EXPECT_EQ(e[i], 1.0);
}

TEST(TimeEmbedding, DeterministicAndDistinct) {
  EXPECT_EQ(time_embedding(0.3, 64), time_embedding(0.3, 64));
  const auto a = time_embedding(0.3, 64), b = time_embedding(0.31, 64);
  double gap = 0;
  for (size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
  EXPECT_GT(gap, 1e-4);
}

TEST(TimeEmbedding, InjectiveOnFineGrid) {
  std::vector<std::vector<double>> all;
  for (int k = 0; k <= 1000; ++k) all.push_back(time_embedding(k * 1e-3, 32));
  for (size_t i = 1; i < all.size(); ++i) {
    double gap = 0;
    for (size_t j = 0; j < all[i].size(); ++j) gap = std::max(gap, std::abs(all[i][j] - all[i - 1][j]));
    ASSERT_GT(gap, 1e-6) << i;
  }
  for (const auto& e : all)
    for (double v : e) ASSERT_TRUE(std::isfinite(v));
}

TEST(TimeEmbedding, RejectsOddDimAndBadTime) {
  EXPECT_THROW(time_embedding(0.5, 7), InvalidArgument);
  EXPECT_THROW(time_embedding(1.5, 8), InvalidArgument);
}

TEST(Lora, FreshAdapterHasZeroB) {
  Rng rng(1);
  LoraAdapter<double> a("x", 8, 6, 2, 4.0, rng);
  EXPECT_EQ(a.B.value.norm(), 0.0);
  EXPECT_GT(a.A.value.norm(), 0.0);
  EXPECT_EQ(a.scale(), 2.0);
}

TEST(Lora, SingleLayerMatchesDenseOracle) {
  Rng rng(5);
  AdaptedProjection<double> proj("p", 4, 4, rng);
  proj.attach("p.lora", 2, 3.0, rng);
  testutil::randomize({&proj.adapter->A, &proj.adapter->B}, rng, 1.0);
  Mat<double> z(5, 4);
  for (long i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
  const Mat<double> W = proj.base.weight.value + (3.0 / 2.0) * proj.adapter->B.value * proj.adapter->A.value;
  Mat<double> expected = z * W.transpose();
  expected.rowwise() += proj.base.bias.value.row(0);
  EXPECT_LT((proj.forward(z) - expected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Lora, FreshAdaptersLeaveNetworkUnchanged) {
  VectorFieldNet<double> base(small_arch(), 3);
  VectorFieldNet<double> adapted(small_arch(), 3);
  adapted.attach_adapters(LoraConfig{}, 17);
  for (int k = 0; k < 20; ++k) {
    const auto z = random_latent({4, 4, 4}, k);
    const double t = k / 19.0;
    EXPECT_LT(max_abs_diff(base.forward(z, t), adapted.forward(z, t)), 1e-7);
  }
}

TEST(Lora, ZeroAlphaIsExactlyBase) {
  VectorFieldNet<double> base(small_arch(), 3);
  VectorFieldNet<double> adapted(small_arch(), 3);
  adapted.attach_adapters(LoraConfig{2, 0.0, LoraConfig{}.targets}, 17);
  randomize_adapters(adapted, 4);
  const auto z = random_latent({4, 3, 5}, 1);
  EXPECT_EQ(base.forward(z, 0.4), adapted.forward(z, 0.4));
}

TEST(Lora, MergeEquivalence) {
  VectorFieldNet<double> net(small_arch(), 3);
  net.attach_adapters(LoraConfig{}, 17);
  randomize_adapters(net, 8);
  const auto z = random_latent({4, 4, 4}, 2);
  const auto before = net.forward(z, 0.7);
  net.merge_adapters();
  EXPECT_TRUE(net.adapter_params().empty());
  EXPECT_LT(max_abs_diff(before, net.forward(z, 0.7)), 1e-6);
}

TEST(Net, TrainableParamsCountByEnumeration) {
  NetArch a;
  a.latent_channels = 4;
  a.width = 8;
  a.depth = 4;
  a.heads = 2;
  a.time_embed_dim = 8;
  VectorFieldNet<double> net(a, 1);
  EXPECT_TRUE(net.trainable_params().empty());
  net.attach_adapters(LoraConfig{2, 4.0, LoraConfig{}.targets}, 2);
  long expected = 0;
  for (int block = 0; block < 4; ++block)
    for (int proj = 0; proj < 4; ++proj) expected += 2 * 8 + 8 * 2;
  EXPECT_EQ(expected, 512);
  EXPECT_EQ(nn::count_params(net.trainable_params()), expected);
  for (auto* p : net.trainable_params()) EXPECT_EQ(p->name.rfind("lora.", 0), 0u) << p->name;
  for (auto* p : net.base_params()) EXPECT_EQ(p->name.rfind("base.", 0), 0u) << p->name;
}

TEST(Net, NoTargetsGivesEmptyView) {
  VectorFieldNet<double> net(small_arch(), 1);
  net.attach_adapters(LoraConfig{4, 8.0, {}}, 2);
  EXPECT_TRUE(net.trainable_params().empty());
}

TEST(Net, OutputShapeAndDeterminism) {
  VectorFieldNet<double> a(small_arch(), 9), b(small_arch(), 9);
  const auto z = random_latent({4, 2, 3}, 4);
  const auto va = a.forward(z, 0.2);
  EXPECT_EQ(va.shape(), z.shape());
  EXPECT_EQ(va, b.forward(z, 0.2));
  EXPECT_EQ(va, a.forward(z, 0.2));
  for (double v : va.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Net, RejectsBadInputs) {
  VectorFieldNet<double> net(small_arch(), 9);
  EXPECT_THROW(net.forward(random_latent({3, 2, 2}, 1), 0.5), InvalidArgument);
  auto z = random_latent({4, 2, 2}, 1);
  EXPECT_THROW(net.forward(z, 1.5), InvalidArgument);
  z[3] = std::nan("");
  EXPECT_THROW(net.forward(z, 0.5), InvalidArgument);
}

TEST(Net, FreezeStopsBaseGradients) {
  VectorFieldNet<double> net(small_arch(), 9);
  net.attach_adapters(LoraConfig{}, 3);
  net.freeze_base();
  const auto z = random_latent({4, 2, 2}, 1);
  net.forward(z, 0.5);
  net.backward(random_latent({4, 2, 2}, 2));
  for (auto* p : net.base_params()) EXPECT_EQ(p->grad.norm(), 0.0) << p->name;
  double adapter_grad = 0;
  for (auto* p : net.adapter_params()) adapter_grad += p->grad.norm();
  EXPECT_GT(adapter_grad, 0.0);
}

TEST(Net, GradientCheckAllParameters) {
  NetArch a = small_arch();
  a.width = 8;
  VectorFieldNet<double> net(a, 21);
  net.attach_adapters(LoraConfig{2, 4.0, LoraConfig{}.targets}, 22);
  randomize_adapters(net, 23);
  const auto z = random_latent({4, 2, 3}, 5);
  const auto target = random_latent({4, 2, 3}, 6);
  auto loss = [&] { return flow::mean_squared_error(net.forward(z, 0.35), target); };
  auto analytic = [&] {
    nn::zero_grads(net.all_params());
    const auto v = net.forward(z, 0.35);
    net.backward((2.0 / v.size()) * (v - target));
  };
  const auto r = testutil::grad_check(net.all_params(), loss, analytic);
  EXPECT_LT(r.worst_rel, 1e-4) << r.worst_name;
}

TEST(Net, InputGradientMatchesFiniteDifference) {
  VectorFieldNet<double> net(small_arch(), 31);
  auto z = random_latent({4, 2, 3}, 7);
  net.forward(z, 0.6);
  const auto dz = net.backward(Tensor3<double>(z.shape(), 1.0));
  for (long i = 0; i < z.size(); ++i) {
    const double save = z[i];
    z[i] = save + 1e-5;
    const double lp = net.forward(z, 0.6).matrix().sum();
    z[i] = save - 1e-5;
    const double lm = net.forward(z, 0.6).matrix().sum();
    z[i] = save;
    EXPECT_NEAR(dz[i], (lp - lm) / 2e-5, 1e-6 * std::max(1.0, std::abs(dz[i])));
  }
}
