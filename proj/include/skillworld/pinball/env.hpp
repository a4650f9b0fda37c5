#pragma once

// Continuous Pinball: a ball in the unit square with convex obstacles,
// velocity-increment actions, and four PI-controlled coordinate options.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillworld/pinball/geometry.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::pinball {

struct PinballState {
  double x = 0.5;
  double y = 0.5;
  double vx = 0.0;
  double vy = 0.0;

  Vec2 pos() const { return {x, y}; }
  Vec2 vel() const { return {vx, vy}; }
  std::array<double, 4> as_array() const { return {x, y, vx, vy}; }
  friend bool operator==(const PinballState&, const PinballState&) = default;
};

inline constexpr std::size_t kNumOptions = 4;
inline constexpr std::size_t kFrameSide = 50;
inline constexpr std::size_t kFrameSize = kFrameSide * kFrameSide;

inline constexpr const char* kOptionNames[kNumOptions] = {"N", "S", "E", "W"};

inline Vec2 direction_vector(std::size_t option) {
  switch (option) {
    case 0: return {0.0, 1.0};
    case 1: return {0.0, -1.0};
    case 2: return {1.0, 0.0};
    case 3: return {-1.0, 0.0};
  }
  throw std::invalid_argument("pinball: option index out of range");
}

struct OptionSpec {
  double step_size = 0.04;
  double kp = 50.0;
  double ki = 8.0;
  double term_sigma = 0.01;
  std::size_t timeout = 200;

  void validate() const {
    if (!(step_size > 0.0)) throw std::invalid_argument("option step_size must be positive");
    if (timeout < 1) throw std::invalid_argument("option timeout must be at least 1");
    if (!(term_sigma > 0.0)) throw std::invalid_argument("option term_sigma must be positive");
  }
};

struct PinballConfig {
  std::vector<Polygon> obstacles;
  double ball_radius = 0.02;
  double drag = 0.995;
  double dt = 0.02;
  double action_cost = 5.0;
  double gamma = 0.9997;
  OptionSpec option;

  void validate() const {
    if (!(ball_radius > 0.0)) throw std::invalid_argument("ball_radius must be positive");
    if (!(drag > 0.0 && drag <= 1.0)) throw std::invalid_argument("drag must lie in (0, 1]");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    for (const auto& p : obstacles)
      for (const auto& v : p.v)
        if (!(v.x > 0.0 && v.x < 1.0 && v.y > 0.0 && v.y < 1.0))
          throw std::invalid_argument("obstacle vertex outside the open unit square");
    option.validate();
  }

  nlohmann::json to_json() const {
    nlohmann::json polys = nlohmann::json::array();
    for (const auto& p : obstacles) {
      nlohmann::json verts = nlohmann::json::array();
      for (const auto& v : p.v) verts.push_back({v.x, v.y});
      polys.push_back(verts);
    }
    return {{"obstacles", polys},         {"ball_radius", ball_radius},
            {"drag", drag},               {"dt", dt},
            {"action_cost", action_cost}, {"gamma", gamma},
            {"step_size", option.step_size}, {"kp", option.kp},
            {"ki", option.ki},            {"term_sigma", option.term_sigma},
            {"timeout", option.timeout}};
  }
};

inline std::vector<Polygon> parse_layout(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("layout must be a JSON list of polygons");
  std::vector<Polygon> out;
  for (const auto& poly : j) {
    std::vector<Vec2> pts;
    for (const auto& v : poly) {
      if (!v.is_array() || v.size() != 2) throw std::invalid_argument("layout vertex must be [x, y]");
      pts.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    out.push_back(make_polygon(std::move(pts)));
  }
  return out;
}

inline std::vector<Polygon> load_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open layout " + path);
  return parse_layout(nlohmann::json::parse(in));
}

#ifdef SKILLWORLD_DATA_DIR
inline std::string default_layout_path() { return std::string(SKILLWORLD_DATA_DIR) + "/pinball_layout.json"; }
#endif

struct StepResult {
  PinballState state;
  double reward = 0.0;
};

struct OptionOutcome {
  PinballState next;
  double r_gamma = 0.0;
  std::size_t tau = 0;
};

using Initiation = std::array<std::uint8_t, kNumOptions>;

class Pinball {
 public:
  explicit Pinball(PinballConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build_background();
  }

  const PinballConfig& config() const { return cfg_; }

  /// Ball center keeps at least the radius from walls and obstacles.
  bool is_free(Vec2 p) const {
    const double r = cfg_.ball_radius;
    if (p.x < r || p.x > 1.0 - r || p.y < r || p.y > 1.0 - r) return false;
    for (const auto& poly : cfg_.obstacles)
      if (point_polygon_distance(poly, p) < r) return false;
    return true;
  }

  /// Uniform free position at rest.
  PinballState sample_free_state(Rng& rng) const {
    for (int i = 0; i < 100000; ++i) {
      const Vec2 p{uniform01(rng), uniform01(rng)};
      if (is_free(p)) return {p.x, p.y, 0.0, 0.0};
    }
    throw std::runtime_error("pinball: no free position found");
  }

  StepResult step(const PinballState& s, Vec2 action) const {
    const Vec2 a{std::clamp(action.x, -1.0, 1.0), std::clamp(action.y, -1.0, 1.0)};
    Vec2 v{std::clamp(s.vx + a.x, -1.0, 1.0), std::clamp(s.vy + a.y, -1.0, 1.0)};
    Vec2 p = s.pos();
    Vec2 d = v * cfg_.dt;
    const double r = cfg_.ball_radius;
    for (int bounce = 0; bounce < 16; ++bounce) {
      std::optional<Contact> hit = sweep_walls(p, d, r);
      for (const auto& poly : cfg_.obstacles) {
        const auto c = sweep_polygon(poly, p, d, r);
        if (c && (!hit || c->t < hit->t)) hit = c;
      }
      if (!hit) {
        p += d;
        d = {0.0, 0.0};
        break;
      }
      p += d * hit->t;
      p += hit->normal * 1e-10;
      const Vec2 rest = d * (1.0 - hit->t);
      d = rest - hit->normal * (2.0 * dot(rest, hit->normal));
      v = v - hit->normal * (2.0 * dot(v, hit->normal));
    }
    v = v * cfg_.drag;
    v = {std::clamp(v.x, -1.0, 1.0), std::clamp(v.y, -1.0, 1.0)};
    return {{p.x, p.y, v.x, v.y}, -cfg_.action_cost * norm(a)};
  }

  /// Option o is available iff the ball swept by step_size along its
  /// direction stays in the square and touches no obstacle.
  Initiation initiation_set(const PinballState& s) const {
    Initiation out{};
    const double r = cfg_.ball_radius;
    const Vec2 p = s.pos();
    for (std::size_t o = 0; o < kNumOptions; ++o) {
      const Vec2 q = p + direction_vector(o) * cfg_.option.step_size;
      bool ok = q.x >= r && q.x <= 1.0 - r && q.y >= r && q.y <= 1.0 - r &&
                p.x >= r && p.x <= 1.0 - r && p.y >= r && p.y <= 1.0 - r;
      for (std::size_t i = 0; ok && i < cfg_.obstacles.size(); ++i)
        ok = segment_polygon_distance(cfg_.obstacles[i], p, q) > r;
      out[o] = ok ? 1 : 0;
    }
    return out;
  }

  /// Runs the PI position controller toward pos + step_size * direction until
  /// the Gaussian termination draw fires or the timeout is reached.
  OptionOutcome execute_option(const PinballState& s, std::size_t o, Rng& rng) const {
    if (o >= kNumOptions) throw std::invalid_argument("pinball: option index out of range");
    if (!initiation_set(s)[o])
      throw std::invalid_argument("pinball: option " + std::to_string(o) + " is not available here");
    const auto& spec = cfg_.option;
    const Vec2 target = s.pos() + direction_vector(o) * spec.step_size;
    Vec2 integral{0.0, 0.0};
    PinballState cur = s;
    OptionOutcome out;
    double discount = 1.0;
    const double inv_two_var = 1.0 / (2.0 * spec.term_sigma * spec.term_sigma);
    for (std::size_t t = 0; t < spec.timeout; ++t) {
      const Vec2 e = target - cur.pos();
      integral += e * cfg_.dt;
      const Vec2 cmd{std::clamp(spec.kp * e.x + spec.ki * integral.x, -1.0, 1.0),
                     std::clamp(spec.kp * e.y + spec.ki * integral.y, -1.0, 1.0)};
      const Vec2 action = cmd - cur.vel();
      const auto res = step(cur, action);
      cur = res.state;
      out.r_gamma += discount * res.reward;
      discount *= cfg_.gamma;
      out.tau = t + 1;
      const Vec2 off = cur.pos() - target;
      const double p_term = std::min(1.0, std::exp(-dot(off, off) * inv_two_var));
      if (uniform01(rng) < p_term) break;
    }
    out.next = cur;
    return out;
  }

  /// 50x50 grayscale top view, row 0 at y = 1. Background 1, obstacles 0,
  /// ball 0.5, with 8x8 supersampled coverage.
  std::vector<double> render(const PinballState& s) const {
    std::vector<double> img = background_;
    const double r = cfg_.ball_radius;
    const double px = 1.0 / static_cast<double>(kFrameSide);
    const auto lo_c = static_cast<long>(std::floor((s.x - r) / px));
    const auto hi_c = static_cast<long>(std::floor((s.x + r) / px));
    const auto lo_r = static_cast<long>(std::floor((1.0 - (s.y + r)) / px));
    const auto hi_r = static_cast<long>(std::floor((1.0 - (s.y - r)) / px));
    constexpr int kSub = 8;
    for (long row = std::max(0L, lo_r); row <= std::min<long>(kFrameSide - 1, hi_r); ++row)
      for (long col = std::max(0L, lo_c); col <= std::min<long>(kFrameSide - 1, hi_c); ++col) {
        int covered = 0;
        for (int i = 0; i < kSub; ++i)
          for (int j = 0; j < kSub; ++j) {
            const double x = (static_cast<double>(col) + (j + 0.5) / kSub) * px;
            const double y = 1.0 - (static_cast<double>(row) + (i + 0.5) / kSub) * px;
            if ((x - s.x) * (x - s.x) + (y - s.y) * (y - s.y) <= r * r) ++covered;
          }
        const double frac = static_cast<double>(covered) / (kSub * kSub);
        double& pix = img[static_cast<std::size_t>(row) * kFrameSide + static_cast<std::size_t>(col)];
        pix = pix * (1.0 - frac) + 0.5 * frac;
      }
    return img;
  }

 private:
  void build_background() {
    background_.assign(kFrameSize, 1.0);
    constexpr int kSub = 8;
    const double px = 1.0 / static_cast<double>(kFrameSide);
    for (std::size_t row = 0; row < kFrameSide; ++row)
      for (std::size_t col = 0; col < kFrameSide; ++col) {
        int inside = 0;
        for (int i = 0; i < kSub; ++i)
          for (int j = 0; j < kSub; ++j) {
            const Vec2 q{(static_cast<double>(col) + (j + 0.5) / kSub) * px,
                         1.0 - (static_cast<double>(row) + (i + 0.5) / kSub) * px};
            for (const auto& poly : cfg_.obstacles)
              if (point_in_polygon(poly, q)) {
                ++inside;
                break;
              }
          }
        background_[row * kFrameSide + col] = 1.0 - static_cast<double>(inside) / (kSub * kSub);
      }
  }

  PinballConfig cfg_;
  std::vector<double> background_;
};

inline PinballConfig default_config() {
  PinballConfig cfg;
#ifdef SKILLWORLD_DATA_DIR
  cfg.obstacles = load_layout(default_layout_path());
#endif
  return cfg;
}

}  // namespace skillworld::pinball
