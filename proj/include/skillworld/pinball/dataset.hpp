#pragma once

// Option-transition datasets: collection with a uniform random-option
// behavior policy, a binary record stream with a JSON header, and CSV export.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillworld/pinball/env.hpp"
#include "skillworld/util/csv.hpp"
#include "skillworld/util/digest.hpp"
#include "skillworld/util/rng.hpp"

namespace skillworld::pinball {

enum class ObsMode { kState, kPixel };

inline ObsMode parse_obs_mode(const std::string& s) {
  if (s == "state") return ObsMode::kState;
  if (s == "pixel") return ObsMode::kPixel;
  throw std::invalid_argument("obs_mode must be 'state' or 'pixel', got '" + s + "'");
}

inline std::string to_string(ObsMode m) { return m == ObsMode::kState ? "state" : "pixel"; }

inline std::size_t obs_dim(ObsMode m) { return m == ObsMode::kState ? 4 : kFrameSize; }

inline std::vector<double> observe(const Pinball& env, const PinballState& s, ObsMode mode) {
  if (mode == ObsMode::kPixel) return env.render(s);
  return {s.x, s.y, s.vx, s.vy};
}

/// One option execution. Ground states are stored; observations are derived
/// from them with observe(), so pixel datasets stay small.
struct TransitionSample {
  PinballState state;
  std::uint32_t option = 0;
  double r_gamma = 0.0;
  PinballState next_state;
  std::uint32_t tau = 0;
  Initiation initiation{};
  std::uint32_t episode = 0;
  std::uint32_t step = 0;       // index within the episode
  std::uint64_t exec_seed = 0;  // seeds the termination draws of this execution

  friend bool operator==(const TransitionSample&, const TransitionSample&) = default;
};

struct Dataset {
  ObsMode obs_mode = ObsMode::kState;
  std::vector<TransitionSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

struct CollectOptions {
  std::size_t n_samples = 0;
  std::size_t episode_cap = 100;  // option executions per episode
  ObsMode obs_mode = ObsMode::kState;
};

/// Uniform random-option behavior from random free rest states. Episodes
/// reset when the ball has no available option or after episode_cap options.
inline Dataset collect_dataset(const Pinball& env, const CollectOptions& opt, std::uint64_t seed) {
  Dataset data;
  data.obs_mode = opt.obs_mode;
  data.samples.reserve(opt.n_samples);
  if (opt.n_samples == 0) return data;
  auto start_rng = make_stream(seed, "collect-start");
  auto choice_rng = make_stream(seed, "collect-choice");
  std::uint32_t episode = 0, step = 0;
  PinballState s = env.sample_free_state(start_rng);
  std::vector<std::size_t> avail;
  while (data.samples.size() < opt.n_samples) {
    const auto init = env.initiation_set(s);
    avail.clear();
    for (std::size_t o = 0; o < kNumOptions; ++o)
      if (init[o]) avail.push_back(o);
    if (avail.empty() || step >= opt.episode_cap) {
      s = env.sample_free_state(start_rng);
      ++episode;
      step = 0;
      continue;
    }
    const std::size_t o = avail[uniform_index(choice_rng, avail.size())];
    TransitionSample t;
    t.state = s;
    t.option = static_cast<std::uint32_t>(o);
    t.initiation = init;
    t.episode = episode;
    t.step = step;
    t.exec_seed = stream_seed(seed, "collect-exec", data.samples.size());
    Rng exec(t.exec_seed);
    const auto out = env.execute_option(s, o, exec);
    t.r_gamma = out.r_gamma;
    t.next_state = out.next;
    t.tau = static_cast<std::uint32_t>(out.tau);
    data.samples.push_back(t);
    s = out.next;
    ++step;
  }
  return data;
}

/// Re-executes a recorded sample from its stored start state and seed.
inline OptionOutcome replay(const Pinball& env, const TransitionSample& t) {
  Rng exec(t.exec_seed);
  return env.execute_option(t.state, t.option, exec);
}

// ---------------------------------------------------------------------------
// Binary record stream

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kRecordBytes = 8 * 4 + 4 + 8 + 8 * 4 + 4 + kNumOptions + 4 + 4 + 8;

namespace detail {

template <class T>
void put(std::vector<unsigned char>& buf, const T& v) {
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <class T>
T take(const unsigned char*& p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  p += sizeof(T);
  return v;
}

inline void put_state(std::vector<unsigned char>& buf, const PinballState& s) {
  put(buf, s.x);
  put(buf, s.y);
  put(buf, s.vx);
  put(buf, s.vy);
}

inline PinballState take_state(const unsigned char*& p) {
  PinballState s;
  s.x = take<double>(p);
  s.y = take<double>(p);
  s.vx = take<double>(p);
  s.vy = take<double>(p);
  return s;
}

}  // namespace detail

inline void write_dataset(const Dataset& data, const std::string& path) {
  const nlohmann::json header{{"obs_mode", to_string(data.obs_mode)},
                              {"n", data.size()},
                              {"schema_version", kSchemaVersion},
                              {"obs_dim", obs_dim(data.obs_mode)},
                              {"n_options", kNumOptions},
                              {"record_bytes", kRecordBytes}};
  const std::string h = header.dump();
  std::vector<unsigned char> buf;
  buf.reserve(4 + h.size() + data.size() * kRecordBytes);
  detail::put(buf, static_cast<std::uint32_t>(h.size()));
  buf.insert(buf.end(), h.begin(), h.end());
  for (const auto& t : data.samples) {
    detail::put_state(buf, t.state);
    detail::put(buf, t.option);
    detail::put(buf, t.r_gamma);
    detail::put_state(buf, t.next_state);
    detail::put(buf, t.tau);
    buf.insert(buf.end(), t.initiation.begin(), t.initiation.end());
    detail::put(buf, t.episode);
    detail::put(buf, t.step);
    detail::put(buf, t.exec_seed);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4) throw std::runtime_error("dataset " + path + " is truncated");
  const unsigned char* p = buf.data();
  const auto hlen = detail::take<std::uint32_t>(p);
  if (buf.size() < 4 + hlen) throw std::runtime_error("dataset " + path + " has a truncated header");
  const auto header = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(p), hlen));
  p += hlen;
  if (header.at("schema_version").get<int>() != kSchemaVersion)
    throw std::runtime_error("dataset " + path + " has unsupported schema version");
  Dataset data;
  data.obs_mode = parse_obs_mode(header.at("obs_mode").get<std::string>());
  const auto n = header.at("n").get<std::size_t>();
  if (buf.size() != 4 + hlen + n * kRecordBytes)
    throw std::runtime_error("dataset " + path + " size does not match its header");
  data.samples.resize(n);
  for (auto& t : data.samples) {
    t.state = detail::take_state(p);
    t.option = detail::take<std::uint32_t>(p);
    t.r_gamma = detail::take<double>(p);
    t.next_state = detail::take_state(p);
    t.tau = detail::take<std::uint32_t>(p);
    for (auto& b : t.initiation) b = *p++;
    t.episode = detail::take<std::uint32_t>(p);
    t.step = detail::take<std::uint32_t>(p);
    t.exec_seed = detail::take<std::uint64_t>(p);
  }
  return data;
}

/// One row per sample. Pixel-mode frames are base64 of their float64 bytes.
inline void export_csv(const Pinball& env, const Dataset& data, const std::string& path) {
  csv::Writer w(path);
  std::vector<std::string> header{"episode", "step", "option", "r_gamma", "tau"};
  for (std::size_t o = 0; o < kNumOptions; ++o) header.push_back(std::string("init_") + kOptionNames[o]);
  for (const char* c : {"x", "y", "vx", "vy", "next_x", "next_y", "next_vx", "next_vy"}) header.push_back(c);
  if (data.obs_mode == ObsMode::kPixel) {
    header.push_back("frame");
    header.push_back("next_frame");
  }
  w.header(header);
  for (const auto& t : data.samples) {
    std::vector<std::string> row{std::to_string(t.episode), std::to_string(t.step), std::to_string(t.option),
                                 csv::format_double(t.r_gamma), std::to_string(t.tau)};
    for (auto b : t.initiation) row.push_back(std::to_string(b));
    for (double v : t.state.as_array()) row.push_back(csv::format_double(v));
    for (double v : t.next_state.as_array()) row.push_back(csv::format_double(v));
    if (data.obs_mode == ObsMode::kPixel) {
      const auto f = env.render(t.state);
      const auto g = env.render(t.next_state);
      row.push_back(base64_encode(as_bytes_le(f)));
      row.push_back(base64_encode(as_bytes_le(g)));
    }
    w.row(row);
  }
}

}  // namespace skillworld::pinball
