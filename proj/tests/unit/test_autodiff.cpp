#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "../support/primitive_cases.hpp"
#include "skillworld/autodiff/adam.hpp"
#include "skillworld/autodiff/checkpoint.hpp"
#include "skillworld/autodiff/gradcheck.hpp"
#include "skillworld/autodiff/mog.hpp"
#include "skillworld/autodiff/transforms.hpp"

using namespace skillworld;
using namespace skillworld::ad;

TEST(Backward, SumOfSquares) {
  Tensor x = Tensor::from(1, 2, {1.0, 2.0}, true);
  backward(sum(square(x)));
  EXPECT_EQ(x.grad(), (std::vector<double>{2.0, 4.0}));
}

TEST(Backward, ConstantLossGivesZeroGrad) {
  Tensor x = Tensor::from(1, 3, {1.0, 2.0, 3.0}, true);
  x.zero_grad();
  backward(add(scale(sum(x), 0.0), Tensor::scalar(4.0)));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, RejectsNonScalar) {
  Tensor x = Tensor::from(1, 2, {1.0, 2.0}, true);
  EXPECT_THROW(backward(square(x)), std::invalid_argument);
}

TEST(Backward, RepeatedCallsAccumulate) {
  Tensor x = Tensor::from(1, 2, {1.0, -3.0}, true);
  const Tensor loss = sum(mul(square(x), x));
  backward(loss);
  backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 54.0);
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
  Tensor x = Tensor::from(1, 1, {3.0}, true);
  const Tensor y = square(x);
  backward(sum(add(y, y)));  // d(2x^2)/dx = 4x
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::from(1, 1, {3.0}, true);
  NoGradGuard g;
  const Tensor y = square(x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Backward, DetachCutsTheGraph) {
  Tensor x = Tensor::from(1, 1, {3.0}, true);
  x.zero_grad();
  backward(sum(mul(x, square(x).detach())));  // treats x^2 as constant 9
  EXPECT_DOUBLE_EQ(x.grad()[0], 9.0);
}

TEST(Primitives, FiniteDifferences20Seeds) {
  for (const auto& pc : testsupport::primitive_cases()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto rng = make_stream(seed, "fd-" + pc.name);
      auto gc = pc.make(rng);
      const auto res = check_gradients(gc.f, gc.inputs);
      EXPECT_LT(res.max_rel_error, 1e-4) << pc.name << " seed " << seed << ": " << res.worst;
      EXPECT_GT(res.checked, 0u) << pc.name;
    }
  }
}

TEST(Primitives, ShapeErrors) {
  const Tensor a = Tensor::zeros(2, 3), b = Tensor::zeros(3, 2);
  EXPECT_THROW(add(a, b), std::invalid_argument);
  EXPECT_THROW(matmul(a, a), std::invalid_argument);
  EXPECT_THROW(diagonal(a), std::invalid_argument);
  EXPECT_THROW(slice_cols(a, 2, 2), std::invalid_argument);
  EXPECT_THROW(gather_cols(a, {0, 3}), std::invalid_argument);
  EXPECT_THROW(add_bias(a, Tensor::zeros(1, 2)), std::invalid_argument);
  EXPECT_THROW(Tensor::from(2, 2, {1.0}), std::invalid_argument);
}

TEST(Primitives, LogsumexpShiftInvariant) {
  auto rng = make_stream(7, "lse");
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = testsupport::random_tensor(rng, 2, 5, -50, 50);
    const double c = uniform(rng, -100, 100);
    const Tensor a = logsumexp_rows(x), b = logsumexp_rows(add_scalar(x, c));
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(b.values()[i], a.values()[i] + c, 1e-12);
  }
}

TEST(Primitives, LogsumexpLargeInputsFinite) {
  const Tensor x = Tensor::from(1, 3, {1000.0, 1000.0, -1000.0});
  EXPECT_NEAR(logsumexp_rows(x).item(), 1000.0 + std::log(2.0), 1e-12);
}

TEST(Primitives, SoftplusSigmoidExtremes) {
  EXPECT_EQ(softplus_scalar(800.0), 800.0);
  EXPECT_NEAR(softplus_scalar(-800.0), 0.0, 1e-300);
  EXPECT_EQ(sigmoid_scalar(-800.0), 0.0);
  EXPECT_EQ(sigmoid_scalar(800.0), 1.0);
}

TEST(MLP, TwoLayerFiniteDifferences) {
  auto rng = make_stream(11, "mlp-fd");
  MLP net(6, {16}, 2, rng);
  const Tensor x = testsupport::random_tensor(rng, 5, 6);
  NamedParams named;
  net.collect("net", named);
  const auto res = check_gradients([&] { return sum(square(net(x))); }, tensors_of(named));
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

TEST(MLP, ForwardIsBitDeterministic) {
  auto rng = make_stream(3, "mlp-det");
  MLP net(4, {128, 128}, 4, rng);
  const Tensor x = testsupport::random_tensor(rng, 16, 4);
  const auto a = net(x).values();
  const auto b = net(x).values();
  EXPECT_EQ(a, b);
}

TEST(MLP, InitializationBounds) {
  auto rng = make_stream(3, "mlp-init");
  const Linear l(64, 8, rng);
  for (double w : l.weight.values()) EXPECT_LE(std::fabs(w), 1.0 / 8.0);
  for (double b : l.bias.values()) EXPECT_LE(std::fabs(b), 1.0 / 8.0);
  EXPECT_THROW(l(Tensor::zeros(1, 7)), std::invalid_argument);
}

TEST(Mog, StandardNormalPeak) {
  // Component 0 carries essentially all weight, unit std, target at its mean.
  const MogParams p{Tensor::from(1, 4, {0.0, -200.0, -200.0, -200.0}), Tensor::from(1, 4, {0.5, 3.0, -2.0, 7.0}),
                    Tensor::from(1, 4, {1.0, 1.0, 1.0, 1.0})};
  const double lp = mog_log_prob(p, Tensor::from(1, 1, {0.5})).item();
  EXPECT_NEAR(lp, -0.5 * std::log(2.0 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(lp, -0.9189, 1e-4);
}

TEST(Mog, SymmetricMixtureMatchesDirectSum) {
  auto normal_pdf = [](double x, double m, double s) {
    return std::exp(-0.5 * (x - m) * (x - m) / (s * s)) / (s * std::sqrt(2.0 * std::numbers::pi));
  };
  const MogParams p{Tensor::from(1, 2, {0.3, 0.3}), Tensor::from(1, 4, {-1.0, 2.0, 1.0, -2.0}),
                    Tensor::from(1, 4, {0.7, 1.3, 0.7, 1.3})};
  const double lp = mog_log_prob(p, Tensor::from(1, 2, {0.0, 0.0})).item();
  const double direct =
      0.5 * normal_pdf(0, -1, 0.7) * normal_pdf(0, 2, 1.3) + 0.5 * normal_pdf(0, 1, 0.7) * normal_pdf(0, -2, 1.3);
  EXPECT_NEAR(lp, std::log(direct), 1e-10);
}

TEST(Mog, FarTargetStaysFinite) {
  const MogParams p{Tensor::from(1, 2, {0.0, 0.0}), Tensor::from(1, 2, {0.0, 1.0}), Tensor::from(1, 2, {1e-4, 1e-4})};
  const double lp = mog_log_prob(p, Tensor::from(1, 1, {50.0})).item();
  EXPECT_TRUE(std::isfinite(lp));
  EXPECT_LT(lp, -1e10);
}

TEST(Mog, TargetDimensionChecked) {
  const MogParams p{Tensor::zeros(2, 4), Tensor::zeros(2, 8), Tensor::full(2, 8, 1.0)};
  EXPECT_THROW(mog_log_prob(p, Tensor::zeros(2, 3)), std::invalid_argument);
}

TEST(Mog, DegenerateStdSamplesMean) {
  const MogParams p{Tensor::from(1, 2, {0.0, 1.0}), Tensor::from(1, 4, {1.0, 2.0, 1.0, 2.0}), Tensor::zeros(1, 4)};
  auto rng = make_stream(1, "mog-degenerate");
  for (int i = 0; i < 10; ++i) EXPECT_EQ(mog_sample(p, rng).values(), (std::vector<double>{1.0, 2.0}));
}

TEST(Mog, SampleFrequenciesAndMean) {
  // Components well separated so the draw's component is identifiable.
  const double w0 = 0.3;
  const MogParams p{Tensor::from(1, 2, {std::log(w0), std::log(1 - w0)}), Tensor::from(1, 2, {-10.0, 10.0}),
                    Tensor::from(1, 2, {0.5, 2.0})};
  auto rng = make_stream(5, "mog-freq");
  const int n = 100000;
  int c0 = 0;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = mog_sample(p, rng).item();
    c0 += x < 0.0;
    s += x;
  }
  EXPECT_NEAR(static_cast<double>(c0) / n, w0, 0.01);
  const double mu = w0 * -10.0 + (1 - w0) * 10.0;
  const double var = w0 * (0.25 + 100) + (1 - w0) * (4.0 + 100) - mu * mu;
  EXPECT_NEAR(s / n, mu, 3.0 * std::sqrt(var / n));
}

TEST(Mog, HeadResidualMeansAndPositiveStd) {
  auto rng = make_stream(2, "mog-head");
  const MogHead head(6, {32}, 3, 4, rng);
  const Tensor ctx = testsupport::random_tensor(rng, 5, 6);
  const Tensor base = testsupport::random_tensor(rng, 5, 3);
  const auto p0 = head(ctx);
  const auto p1 = head(ctx, &base);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t d = 0; d < 3; ++d)
        EXPECT_NEAR(p1.means.at(i, k * 3 + d), p0.means.at(i, k * 3 + d) + base.at(i, d), 1e-12);
  for (double s : p0.stds.values()) EXPECT_GE(s, kStdFloor);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto w = mog_weights(p0, i);
    double t = 0.0;
    for (double x : w) t += x;
    EXPECT_NEAR(t, 1.0, 1e-12);
  }
}

TEST(Adam, ZeroGradLeavesParams) {
  Tensor x = Tensor::from(1, 3, {1.0, -2.0, 0.5}, true);
  Adam opt({x}, {.lr = 0.1});
  x.zero_grad();
  EXPECT_TRUE(opt.step());
  EXPECT_EQ(x.values(), (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Adam, FirstStepHandOracle) {
  Tensor x = Tensor::from(1, 2, {1.0, 1.0}, true);
  Adam opt({x}, {.lr = 0.01});
  x.mutable_grad() = {0.5, -2.0};
  ASSERT_TRUE(opt.step());
  // m_hat = g, v_hat = g^2, so the update is -lr * g / (|g| + eps).
  EXPECT_NEAR(x.values()[0], 1.0 - 0.01 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(x.values()[1], 1.0 + 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
  // Second step with the same gradient by the hand recurrence.
  x.mutable_grad() = {0.5, -2.0};
  ASSERT_TRUE(opt.step());
  const double m = 0.9 * 0.05 + 0.05, v = 0.999 * 0.00025 + 0.00025;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(x.values()[0], 1.0 - 0.01 * 0.5 / (0.5 + 1e-8) - 0.01 * mh / (std::sqrt(vh) + 1e-8), 1e-14);
}

TEST(Adam, QuadraticBowlConverges) {
  Tensor x = Tensor::from(1, 3, {1.0, -0.5, 0.3}, true);
  Adam opt({x}, {.lr = 1e-2});
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    backward(sum(square(x)));
    opt.step();
  }
  double n2 = 0.0;
  for (double v : x.values()) n2 += v * v;
  EXPECT_LT(std::sqrt(n2), 1e-3);
}

TEST(Adam, NanGradientRefused) {
  Tensor x = Tensor::from(1, 2, {1.0, 2.0}, true);
  Adam opt({x}, {.lr = 0.1});
  x.mutable_grad() = {std::nan(""), 1.0};
  EXPECT_FALSE(opt.step());
  EXPECT_EQ(opt.refused_steps(), 1u);
  EXPECT_EQ(opt.steps(), 0u);
  EXPECT_EQ(x.values(), (std::vector<double>{1.0, 2.0}));
}

TEST(Symlog, InversePairAndZero) {
  for (double x : {-1000.0, -1.0, 0.0, 1.0, 1000.0}) EXPECT_NEAR(symexp(symlog(x)), x, 1e-12 * std::max(1.0, std::fabs(x)));
  EXPECT_EQ(symlog(0.0), 0.0);
  EXPECT_NEAR(symlog(-5.0), -std::log(6.0), 1e-15);
}

TEST(Symlog, Monotone) {
  double prev = symlog(-1e4);
  for (int i = 1; i <= 200000; ++i) {
    const double x = -1e4 + i * 0.1;
    const double y = symlog(x);
    ASSERT_GT(y, prev) << x;
    prev = y;
  }
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "skillworld_ckpt_test";
  void SetUp() override { std::filesystem::create_directories(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(CheckpointTest, RoundTripBitExact) {
  auto rng = make_stream(9, "ckpt");
  MLP a(3, {5}, 2, rng), b(3, {5}, 2, rng);
  NamedParams pa, pb;
  a.collect("net", pa);
  b.collect("net", pb);
  ASSERT_NE(params_digest(pa), params_digest(pb));
  const std::string prefix = (dir / "m").string();
  const auto manifest = save_checkpoint(pa, prefix);
  EXPECT_EQ(manifest.at("tensors").size(), 4u);
  EXPECT_EQ(manifest.at("tensors")[0].at("name"), "net.0.weight");
  load_checkpoint(pb, prefix);
  EXPECT_EQ(params_digest(pa), params_digest(pb));
}

TEST_F(CheckpointTest, DetectsTamperingAndMismatch) {
  auto rng = make_stream(9, "ckpt2");
  MLP a(3, {5}, 2, rng);
  NamedParams pa;
  a.collect("net", pa);
  const std::string prefix = (dir / "m").string();
  save_checkpoint(pa, prefix);
  MLP other(3, {6}, 2, rng);
  NamedParams po;
  other.collect("net", po);
  EXPECT_THROW(load_checkpoint(po, prefix), std::runtime_error);
  NamedParams renamed;
  a.collect("enc", renamed);
  EXPECT_THROW(load_checkpoint(renamed, prefix), std::runtime_error);
  {
    std::fstream f(prefix + ".bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(3);
    f.put('\x7f');
  }
  EXPECT_THROW(load_checkpoint(pa, prefix), std::runtime_error);
}
