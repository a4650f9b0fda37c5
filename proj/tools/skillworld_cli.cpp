// skillworld: verify, collect, train-model, plan, eval-mi, mds.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime fault.

#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skillworld/cli/commands.hpp"

namespace {

using namespace skillworld;
using nlohmann::json;

/// Flag values that were actually given, with their config fields. Flags of
/// subcommands that did not run stay empty.
struct Overrides {
  std::vector<std::pair<std::string, std::function<std::optional<json>()>>> fields;

  template <class T>
  void add(CLI::App* app, const std::string& flag, const std::string& section, const std::string& key,
           const std::string& help, std::shared_ptr<std::optional<T>> store) {
    app->add_option(flag, *store, help);
    fields.emplace_back(section + "." + key, [store]() -> std::optional<json> {
      if (!*store) return std::nullopt;
      return json(**store);
    });
  }

  template <class T>
  void opt(CLI::App* app, const std::string& flag, const std::string& section, const std::string& key,
           const std::string& help) {
    add(app, flag, section, key, help, std::make_shared<std::optional<T>>());
  }

  void apply(json& cfg) const {
    for (const auto& [field, get] : fields) {
      const auto v = get();
      if (!v) continue;
      const auto dot = field.find('.');
      cli::set_field(cfg, field.substr(0, dot), field.substr(dot + 1), *v);
    }
  }
};

std::optional<json> parse_pair(const std::string& s, const std::string& flag) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw cli::ConfigError(flag + " expects x,y");
  try {
    std::size_t used = 0;
    const double x = std::stod(s.substr(0, comma), &used);
    if (used != comma) throw std::invalid_argument("");
    const std::string rest = s.substr(comma + 1);
    const double y = std::stod(rest, &used);
    if (used != rest.size()) throw std::invalid_argument("");
    return json::array({x, y});
  } catch (const std::exception&) {
    throw cli::ConfigError(flag + " expects x,y, got '" + s + "'");
  }
}

int run(const std::string& command, const json& cfg) {
  const auto eff = cli::effective_config(cfg, command);
  const auto dir = cli::output_dir(cfg.at("global").at("out").get<std::string>(), command);
  std::filesystem::create_directories(dir);
  analysis::Manifest manifest;
  manifest.command = command;
  manifest.seed = cli::seed_of(cfg);
  manifest.config = eff;
  analysis::write_manifest(manifest, dir / "manifest.json");
  try {
    const std::map<std::string, std::function<cli::Outputs(const json&, const std::filesystem::path&)>> commands{
        {"verify", cli::run_verify},   {"collect", cli::run_collect}, {"train-model", cli::run_train_model},
        {"plan", cli::run_plan},       {"eval-mi", cli::run_eval_mi}, {"mds", cli::run_mds}};
    const auto outputs = commands.at(command)(cfg, dir);
    for (const auto& o : outputs) manifest.outputs.push_back(o);
    manifest.status = "ok";
    analysis::write_manifest(manifest, dir / "manifest.json");
    std::cout << "wrote " << dir.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    manifest.status = "failed";
    manifest.error = e.what();
    analysis::write_manifest(manifest, dir / "manifest.json");
    throw;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skill-driven abstract world models: verification, model learning and planning"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  auto global = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "TOML configuration file");
    ov.opt<long long>(sub, "--seed", "global", "seed", "global seed");
    ov.opt<std::string>(sub, "--out", "global", "out", "output directory");
    ov.opt<std::string>(sub, "--obs-mode", "global", "obs_mode", "state or pixel");
  };

  auto* verify = app.add_subcommand("verify", "certify tabular abstractions");
  global(verify);
  ov.opt<long long>(verify, "--instances", "verify", "instances", "number of instances");
  ov.opt<long long>(verify, "--horizon", "verify", "horizon", "option-sequence depth for rollout gaps");

  auto* collect = app.add_subcommand("collect", "collect Pinball option transitions");
  global(collect);
  ov.opt<long long>(collect, "--samples", "collect", "samples", "option executions");
  ov.opt<bool>(collect, "--csv", "collect", "csv", "also export CSV (true/false)");

  auto* train = app.add_subcommand("train-model", "train the abstract model");
  global(train);
  ov.opt<std::string>(train, "--data", "train-model", "data", "dataset file from collect");
  ov.opt<long long>(train, "--samples", "train-model", "samples", "samples to collect when no dataset is given");
  ov.opt<long long>(train, "--steps", "train-model", "steps", "gradient steps");

  auto* plan = app.add_subcommand("plan", "plan in imagination toward a goal");
  global(plan);
  std::optional<std::string> goal;
  plan->add_option("--goal", goal, "goal position x,y");
  ov.opt<std::string>(plan, "--model", "plan", "model", "pretrained model checkpoint prefix");
  ov.opt<long long>(plan, "--pretrain-samples", "plan", "pretrain_samples", "pretraining transitions");
  ov.opt<long long>(plan, "--pretrain-steps", "plan", "pretrain_steps", "pretraining gradient steps");
  ov.opt<long long>(plan, "--real-steps", "plan", "real_steps", "real option executions");
  ov.opt<long long>(plan, "--imagination-steps", "plan", "imagination_steps", "agent steps per refresh");
  ov.opt<long long>(plan, "--refresh-every", "plan", "refresh_every", "real steps between refreshes");
  ov.opt<long long>(plan, "--target-update", "plan", "target_update", "agent steps between target syncs");
  auto wallclock = std::make_shared<std::optional<bool>>();
  plan->add_flag("--record-wallclock", *wallclock, "fill the wallclock_s column");
  ov.fields.emplace_back("plan.record_wallclock", [wallclock]() -> std::optional<json> {
    if (!*wallclock) return std::nullopt;
    return json(**wallclock);
  });

  auto* mi = app.add_subcommand("eval-mi", "MI matrix between ground and abstract features");
  global(mi);
  ov.opt<std::string>(mi, "--model", "eval-mi", "model", "model checkpoint prefix");
  ov.opt<long long>(mi, "--samples", "eval-mi", "samples", "states to evaluate");
  ov.opt<long long>(mi, "--k", "eval-mi", "k", "neighbours");

  auto* mds = app.add_subcommand("mds", "2-D embedding of abstract states");
  global(mds);
  ov.opt<std::string>(mds, "--model", "mds", "model", "model checkpoint prefix");
  ov.opt<long long>(mds, "--points", "mds", "points", "states to embed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  json cfg;
  try {
    cfg = cli::default_config();
    if (!config_path.empty()) cli::merge_toml_file(cfg, config_path);
    ov.apply(cfg);
    if (goal) cli::set_field(cfg, "plan", "goal", *parse_pair(*goal, "--goal"));
    cli::obs_mode_of(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    return run(command, cfg);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fault: " << e.what() << '\n';
    return 2;
  }
}
