#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "dmsm/backbone.hpp"
#include "dmsm/optim.hpp"

namespace dmsm {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  AdamState adam;
  NoiseSchedule schedule;
  BackboneOptions backbone;
  std::int64_t step = 0;
  double best_metric = -1e300;
  std::string extra_json = "{}";  ///< free-form run metadata
};

/// Writes atomically (temporary file then rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Rejects bad magic, version mismatch, truncation, checksum failure and, when
/// `expected` is given, any architecture difference.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<nn::LhanConfig>& expected = std::nullopt);

/// FNV-1a 64 of a file's bytes as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace dmsm
