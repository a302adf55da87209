#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmsm/kspace.hpp"

namespace dmsm {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDatasetVersion = 1;

/// Randomised ellipse-composite phantom with a smooth phase; magnitude in [0, 1].
ComplexImage make_phantom(int height, int width, std::uint64_t seed);

/// Gaussian-bump coil profiles around the field of view, normalised to Σ|C|² = 1.
/// One coil gives a uniform unit map.
CoilSensitivities make_coil_maps(int height, int width, int n_coils);

/// Rounds every entry to complex64 precision (what the dataset stores).
ComplexImage quantize_complex64(const ComplexImage& x);

enum class Split { train, val, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct MaskSpec {
  double acceleration = 4.0;
  int acs_lines = 8;
};

struct ManifestEntry {
  std::string id;
  Split split = Split::train;
  std::string image_file;  ///< relative to the dataset root
  std::string coil_file;
  std::map<std::string, std::string> mask_files;  ///< keyed by mask_key()
};

struct DatasetManifest {
  std::filesystem::path root;
  int version = kDatasetVersion;
  int height = 0;
  int width = 0;
  int n_coils = 0;
  std::uint64_t seed = 0;
  std::vector<MaskSpec> masks;
  std::vector<ManifestEntry> entries;

  std::vector<std::string> ids(Split split) const;
  const ManifestEntry& entry(const std::string& id) const;
  void validate() const;
};

std::string mask_key(double acceleration);

struct DatasetSpec {
  int n_train = 20;
  int n_val = 5;
  int n_test = 5;
  int height = 64;
  int width = 64;
  int n_coils = 5;
  std::uint64_t seed = 0;
  std::vector<MaskSpec> masks{MaskSpec{}};
};

/// Writes slices/, masks/ and finally manifest.json. Refuses a non-empty
/// directory unless `overwrite` is set.
DatasetManifest build_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir,
                              bool overwrite = false);

/// Missing manifest.json means an incomplete dataset and is rejected.
DatasetManifest load_manifest(const std::filesystem::path& dir);

struct SliceData {
  std::string id;
  ComplexImage image;
  CoilSensitivities coils;
};

SliceData load_slice(const DatasetManifest& manifest, const std::string& id);
SamplingMask load_mask(const DatasetManifest& manifest, const std::string& id, double acceleration);

/// Mask seed used for a slice; the same rule is used by build_dataset.
std::uint64_t slice_mask_seed(std::uint64_t dataset_seed, std::size_t slice_index, double acceleration);

/// Fully sampled multi-coil k-space of a slice.
KSpaceData full_kspace(const SliceData& slice);

// Raw array I/O with JSON sidecars (<file>.meta.json is next to <file>.raw).
void write_complex64(const std::filesystem::path& raw, const ComplexImage& x);
ComplexImage read_complex64(const std::filesystem::path& raw);
void write_mask(const std::filesystem::path& raw, const SamplingMask& m, std::uint64_t seed);
SamplingMask read_mask(const std::filesystem::path& raw);
std::filesystem::path sidecar_path(const std::filesystem::path& raw);

}  // namespace dmsm
