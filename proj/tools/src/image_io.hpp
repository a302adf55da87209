#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dmsm/metrics.hpp"

namespace dmsm::cli {

struct GrayPng {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
  std::map<std::string, std::string> text;
};

/// Linear map of [lo, hi] to 0..255 (values outside are clamped; hi <= lo renders black).
/// The range is recorded in "min"/"max" text chunks.
void write_gray_png(const std::filesystem::path& path, const RealImage& img, double lo, double hi,
                    const std::map<std::string, std::string>& extra_text = {});
GrayPng read_gray_png(const std::filesystem::path& path);

/// Horizontal ramp from lo (left) to hi (right).
void write_legend_png(const std::filesystem::path& path, double lo, double hi, const std::string& label);

void write_float32(const std::filesystem::path& raw, const RealImage& img);
RealImage read_float32(const std::filesystem::path& raw);

}  // namespace dmsm::cli
