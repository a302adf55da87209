#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "dmsm/checkpoint.hpp"
#include "dmsm/train.hpp"

using namespace dmsm::cli;

namespace {

constexpr int kUsage = 1;
constexpr int kFailure = 2;

struct Shared {
  std::filesystem::path config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void add_shared(CLI::App* cmd, Shared& s) {
  cmd->add_option("--config", s.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--set", s.sets, "override a config key, e.g. --set train.steps=100")->take_all();
  cmd->add_option("--seed", s.seed, "seed for this command");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dmsm: self-supervised multi-path diffusion MRI reconstruction"};
  app.require_subcommand(1);
  Shared shared;
  bool resume = false, print_config = false;
  std::optional<int> paths;
  std::optional<std::string> mode;
  ReconstructRequest rec;
  std::filesystem::path recon_dir;

  auto* sim = app.add_subcommand("simulate", "build the phantom dataset");
  add_shared(sim, shared);
  sim->add_flag("--force", shared.force, "overwrite an existing dataset directory");

  auto* tr = app.add_subcommand("train", "train a model on the dataset");
  add_shared(tr, shared);
  tr->add_option("--mode", mode, "self_supervised or supervised")
      ->check(CLI::IsMember({"self_supervised", "supervised"}));
  tr->add_flag("--resume", resume, "continue from the last checkpoint");
  tr->add_flag("--force", shared.force, "discard an existing training directory");

  auto* re = app.add_subcommand("reconstruct", "multi-path reconstruction with uncertainty maps");
  add_shared(re, shared);
  re->add_option("--paths", paths, "number of sampling paths (default 15)")->check(CLI::PositiveNumber);
  re->add_option("--checkpoint", rec.checkpoint, "checkpoint file");
  re->add_option("--slices", rec.slices, "slice ids (default: the configured split)")->delimiter(',');
  re->add_flag("--force", shared.force, "overwrite an existing bundle");

  auto* ev = app.add_subcommand("evaluate", "metrics of a reconstruction bundle against ground truth");
  add_shared(ev, shared);
  ev->add_option("--recon", recon_dir, "bundle directory (default: <output>/recon)");

  auto* cfg_cmd = app.add_subcommand("config", "print the resolved configuration");
  add_shared(cfg_cmd, shared);
  cfg_cmd->callback([&] { print_config = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  RunConfig cfg;
  nlohmann::json resolved;
  try {
    auto sets = shared.sets;
    if (paths) sets.push_back("inference.paths=" + std::to_string(*paths));
    if (mode) sets.push_back("train.mode=\"" + *mode + "\"");
    if (shared.seed) {
      const char* key = sim->parsed() ? "dataset.seed" : tr->parsed() ? "train.seed" : "inference.seed";
      sets.push_back(std::string(key) + "=" + std::to_string(*shared.seed));
    }
    resolved = resolve_config(shared.config, sets);
    cfg = parse_config(resolved);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (print_config) {
      std::cout << resolved.dump(2) << '\n';
    } else if (sim->parsed()) {
      cmd_simulate(cfg, resolved, shared.force, std::cout);
    } else if (tr->parsed()) {
      cmd_train(cfg, resolved, resume, shared.force, std::cout);
    } else if (re->parsed()) {
      rec.force = shared.force;
      cmd_reconstruct(cfg, resolved, rec, std::cout);
    } else if (ev->parsed()) {
      cmd_evaluate(cfg, recon_dir, std::cout);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const dmsm::TrainingAborted& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return 0;
}
