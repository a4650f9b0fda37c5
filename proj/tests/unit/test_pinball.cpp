#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "skillworld/pinball/dataset.hpp"
#include "skillworld/pinball/env.hpp"

using namespace skillworld;
using namespace skillworld::pinball;

namespace {

PinballConfig empty_config() {
  PinballConfig cfg;
  cfg.obstacles.clear();
  return cfg;
}

Pinball standard_env() { return Pinball(default_config()); }

// Disc-overlap test at 200 points along the sweep.
bool dense_sweep_free(const PinballConfig& cfg, Vec2 p, Vec2 q) {
  const double r = cfg.ball_radius;
  for (int i = 0; i < 200; ++i) {
    const double t = i / 199.0;
    const Vec2 c = p + (q - p) * t;
    if (c.x < r || c.x > 1.0 - r || c.y < r || c.y > 1.0 - r) return false;
    for (const auto& poly : cfg.obstacles)
      if (point_polygon_distance(poly, c) <= r) return false;
  }
  return true;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("skillworld_" + name)).string();
}

}  // namespace

TEST(PinballStep, BallisticMotionWithoutDrag) {
  auto cfg = empty_config();
  cfg.drag = 1.0;
  Pinball env(cfg);
  const PinballState s{0.5, 0.5, 0.3, -0.2};
  const auto r = env.step(s, {0.0, 0.0});
  EXPECT_NEAR(r.state.x, 0.5 + 0.3 * cfg.dt, 1e-15);
  EXPECT_NEAR(r.state.y, 0.5 - 0.2 * cfg.dt, 1e-15);
  EXPECT_EQ(r.state.vx, 0.3);
  EXPECT_EQ(r.state.vy, -0.2);
  EXPECT_EQ(r.reward, 0.0);
}

TEST(PinballStep, HeadOnWallReflection) {
  auto cfg = empty_config();
  cfg.drag = 1.0;
  Pinball env(cfg);
  const PinballState s{1.0 - cfg.ball_radius - 0.005, 0.5, 1.0, 0.0};
  const auto r = env.step(s, {0.0, 0.0});
  EXPECT_NEAR(r.state.vx, -1.0, 1e-15);
  EXPECT_EQ(r.state.vy, 0.0);
  EXPECT_LE(r.state.x, 1.0 - cfg.ball_radius);
  // Reflected path: 0.005 in, 0.015 back out.
  EXPECT_NEAR(r.state.x, 1.0 - cfg.ball_radius - 0.015, 1e-9);
}

TEST(PinballStep, RewardIsActionNorm) {
  Pinball env(empty_config());
  const auto r = env.step({0.5, 0.5, 0.0, 0.0}, {0.3, 0.4});
  EXPECT_NEAR(r.reward, -5.0 * 0.5, 1e-15);
}

TEST(PinballStep, ReplayIsBitIdentical) {
  const auto env = standard_env();
  auto rng = make_stream(3, "replay");
  PinballState s = env.sample_free_state(rng);
  std::vector<Vec2> actions;
  std::vector<PinballState> states;
  for (int i = 0; i < 100; ++i) {
    actions.push_back({uniform(rng, -1, 1), uniform(rng, -1, 1)});
    s = env.step(s, actions.back()).state;
    states.push_back(s);
  }
  auto rng2 = make_stream(3, "replay");
  PinballState s2 = env.sample_free_state(rng2);
  for (int i = 0; i < 100; ++i) {
    s2 = env.step(s2, actions[static_cast<std::size_t>(i)]).state;
    EXPECT_EQ(s2, states[static_cast<std::size_t>(i)]);
  }
}

TEST(PinballStep, NeverEntersObstaclesOrLeavesSquare) {
  const auto env = standard_env();
  auto rng = make_stream(5, "million");
  std::size_t bad = 0;
  PinballState s = env.sample_free_state(rng);
  for (int i = 0; i < 1000000; ++i) {
    if (i % 200 == 0) s = env.sample_free_state(rng);
    s = env.step(s, {uniform(rng, -1, 1), uniform(rng, -1, 1)}).state;
    bool inside = s.x < 0.0 || s.x > 1.0 || s.y < 0.0 || s.y > 1.0;
    for (const auto& poly : env.config().obstacles) inside |= point_in_polygon(poly, s.pos());
    bad += inside;
    EXPECT_LE(std::abs(s.vx), 1.0);
    EXPECT_LE(std::abs(s.vy), 1.0);
  }
  EXPECT_EQ(bad, 0u);
}

TEST(PinballStep, EnergyConservedAcrossReflections) {
  auto cfg = default_config();
  cfg.drag = 1.0;
  Pinball env(cfg);
  auto rng = make_stream(6, "energy");
  for (int trial = 0; trial < 20; ++trial) {
    PinballState s = env.sample_free_state(rng);
    const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    s.vx = 0.7 * std::cos(ang);
    s.vy = 0.7 * std::sin(ang);
    const double e0 = s.vx * s.vx + s.vy * s.vy;
    for (int i = 0; i < 2000; ++i) s = env.step(s, {0.0, 0.0}).state;
    EXPECT_NEAR(s.vx * s.vx + s.vy * s.vy, e0, 1e-9);
  }
}

TEST(PinballInitiation, OpenCenterAllAvailable) {
  Pinball env(empty_config());
  const auto init = env.initiation_set({0.5, 0.5, 0.0, 0.0});
  for (auto b : init) EXPECT_EQ(b, 1);
}

TEST(PinballInitiation, NearEastWall) {
  Pinball env(empty_config());
  // The ball's edge is 0.01 from the wall.
  const auto init = env.initiation_set({1.0 - env.config().ball_radius - 0.01, 0.5, 0.0, 0.0});
  EXPECT_EQ(init[2], 0);  // east
  EXPECT_EQ(init[3], 1);  // west
}

TEST(PinballInitiation, AgreesWithDenseSampling) {
  const auto env = standard_env();
  auto rng = make_stream(7, "init-oracle");
  for (int i = 0; i < 1000; ++i) {
    const auto s = env.sample_free_state(rng);
    const auto init = env.initiation_set(s);
    for (std::size_t o = 0; o < kNumOptions; ++o) {
      const Vec2 q = s.pos() + direction_vector(o) * env.config().option.step_size;
      EXPECT_EQ(init[o] != 0, dense_sweep_free(env.config(), s.pos(), q)) << s.x << "," << s.y << " o=" << o;
    }
  }
}

TEST(PinballOption, EastInFreeSpace) {
  Pinball env(empty_config());
  auto rng = make_stream(8, "east");
  for (int i = 0; i < 50; ++i) {
    const PinballState s{0.3, 0.5, 0.0, 0.0};
    const auto out = env.execute_option(s, 2, rng);
    // An early termination draw after one saturated step leaves it exactly 0.02 short.
    EXPECT_LE(std::hypot(out.next.x - 0.34, out.next.y - 0.5), 0.02 + 1e-12);
    EXPECT_GE(out.tau, 1u);
    EXPECT_LE(out.tau, env.config().option.timeout);
  }
}

TEST(PinballOption, SingleStepRewardUndiscounted) {
  auto cfg = empty_config();
  cfg.option.term_sigma = 100.0;  // termination fires on the first step
  Pinball env(cfg);
  auto rng = make_stream(9, "tau1");
  const PinballState s{0.5, 0.5, 0.0, 0.0};
  const auto out = env.execute_option(s, 0, rng);
  ASSERT_EQ(out.tau, 1u);
  // kp * 0.04 saturates the command at 1, so the first action is (0, 1).
  EXPECT_EQ(out.r_gamma, env.step(s, {0.0, 1.0}).reward);
  EXPECT_EQ(out.r_gamma, -5.0);
}

TEST(PinballOption, DeterministicUnderSeed) {
  const auto env = standard_env();
  auto rng = make_stream(10, "start");
  for (int i = 0; i < 50; ++i) {
    const auto s = env.sample_free_state(rng);
    const auto init = env.initiation_set(s);
    for (std::size_t o = 0; o < kNumOptions; ++o) {
      if (!init[o]) {
        auto r = make_stream(1, "x");
        EXPECT_THROW(env.execute_option(s, o, r), std::invalid_argument);
        continue;
      }
      auto a = make_stream(42, "exec", static_cast<std::uint64_t>(i));
      auto b = make_stream(42, "exec", static_cast<std::uint64_t>(i));
      const auto x = env.execute_option(s, o, a);
      const auto y = env.execute_option(s, o, b);
      EXPECT_EQ(x.next, y.next);
      EXPECT_EQ(x.r_gamma, y.r_gamma);
      EXPECT_EQ(x.tau, y.tau);
    }
  }
}

TEST(PinballRender, PositionOnly) {
  const auto env = standard_env();
  EXPECT_EQ(env.render({0.2, 0.9, 0.0, 0.0}), env.render({0.2, 0.9, 0.7, -0.3}));
}

TEST(PinballRender, BallAreaMatchesDisc) {
  Pinball env(empty_config());
  const auto img = env.render({0.503, 0.497, 0.0, 0.0});
  double area = 0.0;
  for (double v : img) area += (1.0 - v) / 0.5;
  const double r_px = env.config().ball_radius * kFrameSide;
  EXPECT_NEAR(area, std::numbers::pi * r_px * r_px, 0.2 * std::numbers::pi * r_px * r_px);
}

TEST(PinballRender, ValuesInUnitRange) {
  const auto env = standard_env();
  auto rng = make_stream(11, "render");
  for (int i = 0; i < 1000; ++i) {
    const auto img = env.render(env.sample_free_state(rng));
    ASSERT_EQ(img.size(), kFrameSize);
    for (double v : img) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(PinballDataset, EmptyRequest) {
  const auto env = standard_env();
  EXPECT_TRUE(collect_dataset(env, {}, 1).empty());
}

TEST(PinballDataset, SampleInvariants) {
  const auto env = standard_env();
  CollectOptions opt;
  opt.n_samples = 10000;
  const auto data = collect_dataset(env, opt, 12);
  ASSERT_EQ(data.size(), 10000u);
  for (const auto& t : data.samples) {
    ASSERT_GE(t.tau, 1u);
    ASSERT_LE(t.tau, env.config().option.timeout);
    ASSERT_EQ(t.initiation[t.option], 1);
    ASSERT_EQ(t.initiation, env.initiation_set(t.state));
  }
}

TEST(PinballDataset, UniformOptionChoiceInOpenRegion) {
  Pinball env(empty_config());
  CollectOptions opt;
  opt.n_samples = 10000;
  const auto data = collect_dataset(env, opt, 13);
  std::size_t counts[kNumOptions] = {0, 0, 0, 0}, open = 0;
  for (const auto& t : data.samples) {
    if (t.initiation != Initiation{1, 1, 1, 1}) continue;
    ++open;
    ++counts[t.option];
  }
  ASSERT_GT(open, 5000u);
  for (auto c : counts) EXPECT_NEAR(static_cast<double>(c) / static_cast<double>(open), 0.25, 0.02);
}

TEST(PinballDataset, ReplayReproducesSamples) {
  const auto env = standard_env();
  CollectOptions opt;
  opt.n_samples = 500;
  const auto data = collect_dataset(env, opt, 14);
  for (const auto& t : data.samples) {
    const auto out = replay(env, t);
    EXPECT_EQ(out.next, t.next_state);
    EXPECT_EQ(out.r_gamma, t.r_gamma);
    EXPECT_EQ(out.tau, t.tau);
  }
}

TEST(PinballDataset, BinaryRoundTrip) {
  const auto env = standard_env();
  CollectOptions opt;
  opt.n_samples = 300;
  opt.obs_mode = ObsMode::kPixel;
  const auto data = collect_dataset(env, opt, 15);
  const auto path = temp_path("dataset.bin");
  write_dataset(data, path);
  const auto back = read_dataset(path);
  EXPECT_EQ(back.obs_mode, ObsMode::kPixel);
  EXPECT_EQ(back.samples, data.samples);
  std::filesystem::remove(path);
}

TEST(PinballDataset, CsvExportDecodesFrames) {
  const auto env = standard_env();
  CollectOptions opt;
  opt.n_samples = 5;
  opt.obs_mode = ObsMode::kPixel;
  const auto data = collect_dataset(env, opt, 16);
  const auto path = temp_path("dataset.csv");
  export_csv(env, data, path);
  const auto table = csv::read(path);
  ASSERT_EQ(table.rows.size(), 5u);
  const auto col = table.column("frame");
  const auto frame = doubles_from_bytes(base64_decode(table.rows[2][col]));
  EXPECT_EQ(frame, env.render(data.samples[2].state));
  EXPECT_EQ(csv::parse_double(table.rows[3][table.column("r_gamma")]), data.samples[3].r_gamma);
  std::filesystem::remove(path);
}

TEST(PinballConfig, RejectsBadLayout) {
  EXPECT_THROW(parse_layout(nlohmann::json::parse("[[[0.1,0.1],[0.2,0.2]]]")), std::invalid_argument);
  EXPECT_THROW(parse_layout(nlohmann::json::parse(
                   "[[[0.1,0.1],[0.3,0.1],[0.2,0.15],[0.3,0.3],[0.1,0.3]]]")),
               std::invalid_argument);
  EXPECT_THROW(make_polygon({{0.1, 0.1}, {0.2, 0.2}, {0.3, 0.3}}), std::invalid_argument);
}
