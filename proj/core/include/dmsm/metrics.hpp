#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dmsm/kspace.hpp"

namespace dmsm {

/// Real-valued map (magnitudes, error maps, uncertainty maps), row-major.
struct RealImage {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  RealImage() = default;
  RealImage(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const RealImage& o) const { return height == o.height && width == o.width; }
  double max() const;
};

RealImage magnitude(const ComplexImage& x);
/// | |x| - |ref| | per pixel.
RealImage abs_error(const ComplexImage& x, const ComplexImage& ref);

/// PSNR in dB; +infinity when the images are identical.
double psnr(const RealImage& x, const RealImage& ref, std::optional<double> data_range = {});
double psnr(const ComplexImage& x, const ComplexImage& ref, std::optional<double> data_range = {});
inline bool is_perfect(double psnr_db) { return psnr_db == std::numeric_limits<double>::infinity(); }

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  std::optional<double> data_range;  ///< defaults to max of ref
};

/// Gaussian-windowed SSIM averaged over all valid window positions.
double ssim(const RealImage& x, const RealImage& ref, const SsimOptions& opts = {});
double ssim(const ComplexImage& x, const ComplexImage& ref, const SsimOptions& opts = {});

double mae(const RealImage& x, const RealImage& ref);
double mae(const ComplexImage& x, const ComplexImage& ref);

/// Pearson correlation, optionally over the pixels where `foreground` is true.
double pcc(const RealImage& a, const RealImage& b, const std::vector<bool>* foreground = nullptr);

/// Pixels where ref > fraction * max(ref).
std::vector<bool> foreground_mask(const RealImage& ref, double fraction = 0.05);

struct SliceMetrics {
  std::string id;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double mae = 0.0;
  std::optional<double> pcc;
};

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  ///< sample standard deviation (0 for a single slice)
};

Aggregate aggregate(const std::vector<double>& values);

struct MetricReport {
  std::string label;
  std::vector<SliceMetrics> slices;
  Aggregate psnr_db;
  Aggregate ssim;
  Aggregate mae;
  std::optional<Aggregate> pcc;

  void finalize();
};

/// Magnitude metrics after normalising both images by max|ref|.
SliceMetrics evaluate_slice(const std::string& id, const ComplexImage& recon,
                            const ComplexImage& ref, const RealImage* uncertainty = nullptr,
                            double foreground_fraction = 0.05);

}  // namespace dmsm
