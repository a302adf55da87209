#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmsm/metrics.hpp"
#include "run_config.hpp"

namespace dmsm::cli {

/// Refusals the user can fix from the command line (exit code 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void cmd_simulate(const RunConfig& cfg, const nlohmann::json& resolved, bool force, std::ostream& out);

void cmd_train(const RunConfig& cfg, const nlohmann::json& resolved, bool resume, bool force,
               std::ostream& out);

struct ReconstructRequest {
  std::filesystem::path checkpoint;  ///< empty: best.ckpt, else last.ckpt of the train directory
  std::vector<std::string> slices;   ///< empty: every slice of inference.split
  bool force = false;
};
void cmd_reconstruct(const RunConfig& cfg, const nlohmann::json& resolved, const ReconstructRequest& req,
                     std::ostream& out);

/// Reports for the reconstruction and the zero-filled baseline.
std::vector<MetricReport> cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& recon_dir,
                                       std::ostream& out);

/// Per-slice seed used by reconstruct; depends only on the base seed and the slice id.
std::uint64_t slice_seed(std::uint64_t base, const std::string& id);

nlohmann::json report_json(const MetricReport& r);
void write_report_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports);

}  // namespace dmsm::cli
