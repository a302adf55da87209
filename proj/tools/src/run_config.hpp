#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmsm/data.hpp"
#include "dmsm/inference.hpp"
#include "dmsm/lhan.hpp"
#include "dmsm/schedule.hpp"
#include "dmsm/train.hpp"

namespace dmsm::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InferenceSettings {
  int paths = 15;
  std::uint64_t seed = 0;
  double acceleration = 4.0;
  Split split = Split::test;
  bool save_paths = false;
  InferenceOptions options{};
};

struct RunConfig {
  std::filesystem::path dataset_dir = "data";
  DatasetSpec dataset{};
  int schedule_steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  nn::LhanConfig model{};
  TrainConfig train{};
  double train_acceleration = 4.0;
  int log_every = 50;
  InferenceSettings inference{};
  std::filesystem::path output_dir = "runs/default";

  NoiseSchedule schedule() const { return NoiseSchedule::linear(schedule_steps, beta_start, beta_end); }
  std::filesystem::path train_dir() const { return output_dir / "train"; }
  std::filesystem::path recon_dir() const { return output_dir / "recon"; }
  std::filesystem::path eval_dir() const { return output_dir / "eval"; }
};

/// Every accepted key with its default value.
nlohmann::json default_config_json();

/// Recursively overlays `patch` on the defaults. Unknown keys and type mismatches throw ConfigError.
nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& patch,
                            const std::string& where = "");

/// Applies "a.b.c=value"; value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

RunConfig parse_config(const nlohmann::json& config);

/// Defaults, then the optional file, then overrides in order.
nlohmann::json resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

}  // namespace dmsm::cli
