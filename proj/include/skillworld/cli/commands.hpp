#pragma once

// Subcommand bodies. Each takes the merged configuration and a run
// directory whose manifest has already been written, and returns the files it
// produced (relative to the directory).

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillworld/analysis/export.hpp"
#include "skillworld/analysis/ksg.hpp"
#include "skillworld/analysis/mds.hpp"
#include "skillworld/cli/config.hpp"
#include "skillworld/model/train.hpp"
#include "skillworld/pinball/dataset.hpp"
#include "skillworld/planner/algorithm.hpp"
#include "skillworld/tabular/abstraction.hpp"
#include "skillworld/tabular/instances.hpp"
#include "skillworld/tabular/verify.hpp"

namespace skillworld::cli {

using Outputs = std::vector<std::string>;
namespace fs = std::filesystem;

inline std::uint64_t seed_of(const nlohmann::json& cfg) { return cfg.at("global").at("seed").get<std::uint64_t>(); }

inline pinball::ObsMode obs_mode_of(const nlohmann::json& cfg) {
  try {
    return pinball::parse_obs_mode(cfg.at("global").at("obs_mode").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config field 'global.obs_mode': ") + e.what());
  }
}

/// Sections recorded in the manifest for a command.
inline nlohmann::json effective_config(const nlohmann::json& cfg, const std::string& command) {
  nlohmann::json out{{"global", cfg.at("global")}, {command, cfg.at(command)}};
  const bool pretrains = (command == "eval-mi" || command == "mds") && cfg.at(command).at("model").get<std::string>().empty();
  if (pretrains) out["train-model"] = cfg.at("train-model");
  return out;
}

// --- verify -----------------------------------------------------------------

/// Even indices are constructed dynamics preserving, odd ones are not.
inline tabular::LabeledInstance verify_instance(std::uint64_t instance_seed, std::size_t index) {
  Rng rng(instance_seed);
  return index % 2 == 0 ? tabular::block_instance(rng) : tabular::nonpreserving_instance(rng);
}

inline std::uint64_t verify_instance_seed(std::uint64_t seed, std::size_t index) {
  return stream_seed(seed, "verify", index);
}

inline nlohmann::json verify_certificate(std::uint64_t seed, std::size_t index, const nlohmann::json& vcfg) {
  const std::uint64_t iseed = verify_instance_seed(seed, index);
  const auto inst = verify_instance(iseed, index);
  const auto verdict = tabular::check_dynamics_preserving(inst.mdp, inst.phi);
  const auto model = tabular::build_abstract_model(inst.mdp, inst.phi);
  const auto gap = tabular::max_rollout_gap(model, vcfg.at("horizon").get<std::size_t>());
  auto rng = make_stream(iseed, "certificate");
  double residual = 0.0;
  for (std::size_t p = 0; p < vcfg.at("policies").get<std::size_t>(); ++p) {
    const auto pol = tabular::random_deterministic_policy(model.abstract, rng);
    residual = std::max(residual, tabular::check_value_preservation(model, pol).max_residual);
  }
  const auto vl = tabular::value_loss_experiment(model, vcfg.at("perturb_scale").get<double>(), {}, rng);
  return {{"instance_seed", iseed},
          {"preserving", verdict.preserving},
          {"max_Bt_gap", gap.max_gap},
          {"value_residual", residual},
          {"value_loss", {{"eps_T", vl.eps_T}, {"eps_R", vl.eps_R}, {"gap", vl.measured_gap}, {"bound", vl.bound}}}};
}

inline Outputs run_verify(const nlohmann::json& cfg, const fs::path& dir) {
  const auto& v = cfg.at("verify");
  const auto n = v.at("instances").get<std::size_t>();
  if (v.at("horizon").get<std::size_t>() == 0) throw ConfigError("config field 'verify.horizon': must be positive");
  std::ofstream out(dir / "certificates.jsonl");
  if (!out) throw std::runtime_error("cannot write certificates.jsonl");
  for (std::size_t i = 0; i < n; ++i) out << verify_certificate(seed_of(cfg), i, v).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: certificates.jsonl");
  return {"certificates.jsonl"};
}

// --- collect / train --------------------------------------------------------

inline const pinball::Pinball& pinball_env() {
  static const pinball::Pinball env(pinball::default_config());
  return env;
}

inline Outputs run_collect(const nlohmann::json& cfg, const fs::path& dir) {
  const auto& c = cfg.at("collect");
  const auto data = pinball::collect_dataset(pinball_env(),
                                             {.n_samples = c.at("samples").get<std::size_t>(),
                                              .episode_cap = c.at("episode_cap").get<std::size_t>(),
                                              .obs_mode = obs_mode_of(cfg)},
                                             seed_of(cfg));
  pinball::write_dataset(data, (dir / "dataset.bin").string());
  Outputs out{"dataset.bin"};
  if (c.at("csv").get<bool>()) {
    pinball::export_csv(pinball_env(), data, (dir / "dataset.csv").string());
    out.push_back("dataset.csv");
  }
  return out;
}

struct Pretrained {
  pinball::Dataset data;
  model::TrainingSet ts;
  model::AbstractModel model;
  std::vector<model::TrainLogRow> log;
};

inline model::TrainConfig train_config_of(const nlohmann::json& t, std::size_t steps) {
  model::TrainConfig tc;
  tc.steps = steps;
  tc.batch_size = t.at("batch_size").get<std::size_t>();
  tc.lr = t.at("lr").get<double>();
  tc.log_every = t.at("log_every").get<std::size_t>();
  return tc;
}

/// Collects (or reads) a dataset and trains an abstract model on it.
inline Pretrained pretrain(const nlohmann::json& cfg, std::size_t samples, std::size_t steps,
                           const std::string& diagnostic_prefix = "") {
  const auto& t = cfg.at("train-model");
  const auto mode = obs_mode_of(cfg);
  const auto data_path = t.at("data").get<std::string>();
  auto data = data_path.empty() ? pinball::collect_dataset(pinball_env(), {.n_samples = samples, .obs_mode = mode},
                                                           seed_of(cfg))
                                : pinball::read_dataset(data_path);
  if (data.empty()) throw ConfigError("pretraining needs a non-empty dataset");
  data.obs_mode = mode;
  auto ts = model::from_pinball(pinball_env(), data);
  model::ModelConfig mc;
  mc.obs_dim = ts.obs_dim;
  mc.d_z = t.at("d_z").get<std::size_t>();
  auto tc = train_config_of(t, steps);
  tc.diagnostic_prefix = diagnostic_prefix;
  auto r = model::train_model(ts, mc, tc, seed_of(cfg));
  return {std::move(data), std::move(ts), std::move(r.model), std::move(r.log)};
}

inline Outputs run_train_model(const nlohmann::json& cfg, const fs::path& dir) {
  const auto& t = cfg.at("train-model");
  auto p = pretrain(cfg, t.at("samples").get<std::size_t>(), t.at("steps").get<std::size_t>(),
                    (dir / "diverged").string());
  model::write_training_log(p.log, (dir / "training_log.csv").string());
  model::save_model(p.model, (dir / "model").string(), {{"seed", seed_of(cfg)}});
  return {"training_log.csv", "model.json", "model.bin"};
}

/// A model from a checkpoint when a path is given, else freshly trained.
inline model::AbstractModel model_for(const nlohmann::json& cfg, const std::string& section) {
  const auto path = cfg.at(section).at("model").get<std::string>();
  if (!path.empty()) return model::load_model(path);
  const auto& t = cfg.at("train-model");
  return pretrain(cfg, t.at("samples").get<std::size_t>(), t.at("steps").get<std::size_t>()).model;
}

/// Encodes ground states with the model in the configured observation mode.
inline std::vector<std::vector<double>> encode_states(const model::AbstractModel& m, const pinball::Dataset& data,
                                                      std::size_t n, pinball::ObsMode mode) {
  if (m.config().obs_dim != pinball::obs_dim(mode))
    throw ConfigError("model expects " + std::to_string(m.config().obs_dim) + " inputs, observation mode '" +
                      pinball::to_string(mode) + "' gives " + std::to_string(pinball::obs_dim(mode)));
  std::vector<std::vector<double>> z;
  for (std::size_t i = 0; i < n; ++i) z.push_back(m.encode_one(pinball::observe(pinball_env(), data.samples[i].state, mode)));
  return z;
}

// --- eval-mi / mds ----------------------------------------------------------

inline Outputs run_eval_mi(const nlohmann::json& cfg, const fs::path& dir) {
  const auto& e = cfg.at("eval-mi");
  const auto n = e.at("samples").get<std::size_t>();
  if (n < e.at("k").get<std::size_t>() + 1) throw ConfigError("config field 'eval-mi.samples': must exceed k");
  const auto m = model_for(cfg, "eval-mi");
  const auto mode = obs_mode_of(cfg);
  const auto data = pinball::collect_dataset(pinball_env(), {.n_samples = n, .obs_mode = mode},
                                             stream_seed(seed_of(cfg), "eval"));
  const auto z = encode_states(m, data, n, mode);
  std::vector<std::vector<double>> g(4, std::vector<double>(n)), a(m.d_z(), std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = data.samples[i].state.as_array();
    for (std::size_t d = 0; d < 4; ++d) g[d][i] = s[d];
    for (std::size_t d = 0; d < m.d_z(); ++d) a[d][i] = z[i][d];
  }
  analysis::write_mi_matrix(analysis::mi_matrix(g, {"x", "y", "vx", "vy"}, a, e.at("k").get<std::size_t>()),
                            (dir / "mi_matrix.csv").string());
  return {"mi_matrix.csv"};
}

inline Outputs run_mds(const nlohmann::json& cfg, const fs::path& dir) {
  const auto n = cfg.at("mds").at("points").get<std::size_t>();
  if (n < 2) throw ConfigError("config field 'mds.points': need at least 2 points");
  const auto m = model_for(cfg, "mds");
  const auto mode = obs_mode_of(cfg);
  const auto data = pinball::collect_dataset(pinball_env(), {.n_samples = n, .obs_mode = mode},
                                             stream_seed(seed_of(cfg), "eval"));
  const auto z = encode_states(m, data, n, mode);
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m.d_z()));
  std::vector<std::array<double, 2>> ground;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < m.d_z(); ++d) pts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = z[i][d];
    ground.push_back({data.samples[i].state.x, data.samples[i].state.y});
  }
  const auto emb = analysis::classical_mds(pts, 2);
  analysis::write_mds(analysis::mds_rows(emb.coords, ground), (dir / "mds.csv").string());
  return {"mds.csv"};
}

// --- plan -------------------------------------------------------------------

inline planner::PlanConfig plan_config_of(const nlohmann::json& p) {
  planner::PlanConfig pc;
  pc.real_steps = p.at("real_steps").get<std::size_t>();
  pc.refresh_every = p.at("refresh_every").get<std::size_t>();
  pc.imagination_steps = p.at("imagination_steps").get<std::size_t>();
  pc.episode_cap = p.at("episode_cap").get<std::size_t>();
  pc.eval_episodes = p.at("eval_episodes").get<std::size_t>();
  pc.record_wallclock = p.at("record_wallclock").get<bool>();
  pc.task.r_task = p.at("r_task").get<double>();
  pc.task.reward_scale = p.at("reward_scale").get<double>();
  pc.agent.target_update = p.at("target_update").get<std::size_t>();
  pc.agent.lr = p.at("lr").get<double>();
  return pc;
}

inline planner::PinballGoalEnv goal_env_of(const nlohmann::json& p, pinball::ObsMode mode) {
  const auto goal = p.at("goal").get<std::vector<double>>();
  const auto start = p.at("start").get<std::vector<double>>();
  return planner::PinballGoalEnv(pinball_env(), {goal[0], goal[1]}, p.at("goal_radius").get<double>(),
                                 {start[0], start[1]}, mode);
}

inline Outputs run_plan(const nlohmann::json& cfg, const fs::path& dir) {
  const auto& p = cfg.at("plan");
  const auto mode = obs_mode_of(cfg);
  const auto genv = goal_env_of(p, mode);  // validates goal and start before any training
  auto pc = plan_config_of(p);
  pc.validate();
  const auto samples = p.at("pretrain_samples").get<std::size_t>();
  pc.pretrain_offset = samples;
  const auto model_path = p.at("model").get<std::string>();
  Outputs out;
  auto pre = [&] {
    if (model_path.empty())
      return pretrain(cfg, samples, p.at("pretrain_steps").get<std::size_t>(), (dir / "diverged").string());
    auto data = pinball::collect_dataset(pinball_env(), {.n_samples = samples, .obs_mode = mode}, seed_of(cfg));
    auto ts = model::from_pinball(pinball_env(), data);
    return Pretrained{std::move(data), std::move(ts), model::load_model(model_path), {}};
  }();
  if (model_path.empty()) {
    model::write_training_log(pre.log, (dir / "training_log.csv").string());
    model::save_model(pre.model, (dir / "model").string(), {{"seed", seed_of(cfg)}});
    out = {"training_log.csv", "model.json", "model.bin"};
  }
  const auto res = planner::run_algorithm1(genv, pre.model, planner::start_states_from(pre.model, pre.ts), pc,
                                           seed_of(cfg));
  planner::write_curves(res.curve, (dir / "curves.csv").string());
  out.push_back("curves.csv");
  const auto& s = res.stats;
  const nlohmann::json stats{{"real_steps", s.real_steps},
                             {"real_episodes", s.real_episodes},
                             {"stuck_resets", s.stuck_resets},
                             {"imagined_steps", s.imagined_steps},
                             {"imagined_goal_terminations", s.imagined_goal_terminations},
                             {"truncated_no_option", s.truncated_no_option},
                             {"goal_radius", s.goal_radius},
                             {"classifier_active", s.classifier_active}};
  std::ofstream(dir / "plan_stats.json") << stats.dump(2) << '\n';
  out.push_back("plan_stats.json");
  return out;
}

}  // namespace skillworld::cli
