#pragma once

// Environment-neutral option-transition records for model learning.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "skillworld/pinball/dataset.hpp"

namespace skillworld::model {

struct Record {
  std::vector<double> ground;
  std::size_t option = 0;
  double r_gamma = 0.0;
  std::vector<double> next_ground;
  double tau = 1.0;
  std::vector<std::uint8_t> initiation;
  long prev = -1;  // index of the preceding record of the same trajectory
};

/// Records plus the map from ground vectors to observations.
struct TrainingSet {
  std::size_t obs_dim = 0;
  std::size_t n_options = 0;
  std::vector<Record> records;
  std::function<void(const std::vector<double>& ground, double* out)> observe;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  void validate() const {
    if (obs_dim == 0 || n_options == 0) throw std::invalid_argument("training set needs obs_dim and n_options");
    if (!observe) throw std::invalid_argument("training set has no observation map");
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      if (r.option >= n_options) throw std::invalid_argument("record " + std::to_string(i) + ": option out of range");
      if (!(r.tau > 0.0)) throw std::invalid_argument("record " + std::to_string(i) + ": duration must be positive");
      if (r.initiation.size() != n_options)
        throw std::invalid_argument("record " + std::to_string(i) + ": initiation vector has wrong length");
      if (r.prev >= static_cast<long>(i)) throw std::invalid_argument("record " + std::to_string(i) + ": bad predecessor");
    }
  }
};

inline TrainingSet from_pinball(const pinball::Pinball& env, const pinball::Dataset& data) {
  TrainingSet ts;
  ts.obs_dim = pinball::obs_dim(data.obs_mode);
  ts.n_options = pinball::kNumOptions;
  ts.records.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& t = data.samples[i];
    Record r;
    const auto s = t.state.as_array(), n = t.next_state.as_array();
    r.ground.assign(s.begin(), s.end());
    r.next_ground.assign(n.begin(), n.end());
    r.option = t.option;
    r.r_gamma = t.r_gamma;
    r.tau = static_cast<double>(t.tau);
    r.initiation.assign(t.initiation.begin(), t.initiation.end());
    if (t.step > 0 && i > 0 && data.samples[i - 1].episode == t.episode && data.samples[i - 1].step + 1 == t.step)
      r.prev = static_cast<long>(i - 1);
    ts.records.push_back(std::move(r));
  }
  if (data.obs_mode == pinball::ObsMode::kState) {
    ts.observe = [](const std::vector<double>& g, double* out) { std::copy(g.begin(), g.end(), out); };
  } else {
    const pinball::Pinball* e = &env;
    ts.observe = [e](const std::vector<double>& g, double* out) {
      const auto f = e->render({g[0], g[1], g[2], g[3]});
      std::copy(f.begin(), f.end(), out);
    };
  }
  return ts;
}

}  // namespace skillworld::model
