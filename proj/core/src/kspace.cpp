#include "dmsm/kspace.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>

namespace dmsm {

ComplexImage::ComplexImage(int coils, int height, int width)
    : coils_(coils), height_(height), width_(width) {
  if (coils < 1 || height < 1 || width < 1)
    throw std::invalid_argument("ComplexImage: dimensions must be positive");
  data_.assign(static_cast<std::size_t>(coils) * height * width, cplx{});
}

ComplexImage::ComplexImage(int coils, int height, int width, std::vector<cplx> data)
    : coils_(coils), height_(height), width_(width), data_(std::move(data)) {
  if (coils < 1 || height < 1 || width < 1)
    throw std::invalid_argument("ComplexImage: dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(coils) * height * width)
    throw std::invalid_argument("ComplexImage: data size does not match shape");
}

void ComplexImage::validate() const {
  if (height_ < 8 || width_ < 8 || height_ % 2 || width_ % 2)
    throw std::invalid_argument("ComplexImage: grid must be even and at least 8x8, got " +
                                std::to_string(height_) + "x" + std::to_string(width_));
  for (const auto& v : data_)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw NonFiniteError("ComplexImage: non-finite entry");
}

ComplexImage& ComplexImage::operator+=(const ComplexImage& rhs) {
  if (!same_shape(rhs)) throw std::invalid_argument("ComplexImage +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

ComplexImage& ComplexImage::operator-=(const ComplexImage& rhs) {
  if (!same_shape(rhs)) throw std::invalid_argument("ComplexImage -=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

ComplexImage& ComplexImage::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

double ComplexImage::norm() const {
  double acc = 0.0;
  for (const auto& v : data_) acc += std::norm(v);
  return std::sqrt(acc);
}

ComplexImage operator+(ComplexImage lhs, const ComplexImage& rhs) { return lhs += rhs; }
ComplexImage operator-(ComplexImage lhs, const ComplexImage& rhs) { return lhs -= rhs; }
ComplexImage operator*(double s, ComplexImage x) { return x *= s; }

double real_inner(const ComplexImage& a, const ComplexImage& b) {
  return inner(a, b).real();
}

cplx inner(const ComplexImage& a, const ComplexImage& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("inner: shape mismatch");
  cplx acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

// ---------------------------------------------------------------------------
// Sampling masks

Rect centered_acs(int height, int width, int lines) {
  if (lines <= 0) return {height / 2, width / 2, 0, 0};
  const int rows = std::min(lines, height);
  const int cols = std::min(lines, width);
  return {height / 2 - rows / 2, width / 2 - cols / 2, rows, cols};
}

SamplingMask::SamplingMask(int height, int width, std::vector<std::uint8_t> grid, Rect acs,
                           double nominal_acceleration)
    : height_(height),
      width_(width),
      grid_(std::move(grid)),
      acs_(acs),
      nominal_acceleration_(nominal_acceleration) {
  if (height < 1 || width < 1) throw std::invalid_argument("SamplingMask: empty grid");
  if (grid_.size() != static_cast<std::size_t>(height) * width)
    throw std::invalid_argument("SamplingMask: grid size does not match shape");
  validate();
}

SamplingMask SamplingMask::full(int height, int width) {
  return {height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 1),
          Rect{}, 1.0};
}

SamplingMask SamplingMask::zeros(int height, int width) {
  return {height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0),
          Rect{}, std::numeric_limits<double>::infinity()};
}

std::size_t SamplingMask::count() const {
  return static_cast<std::size_t>(std::count(grid_.begin(), grid_.end(), std::uint8_t{1}));
}

double SamplingMask::achieved_acceleration() const {
  const auto n = count();
  if (n == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(grid_.size()) / static_cast<double>(n);
}

void SamplingMask::validate() const {
  for (auto v : grid_)
    if (v > 1) throw std::invalid_argument("SamplingMask: entries must be 0 or 1");
  if (acs_.rows < 0 || acs_.cols < 0 || acs_.row0 < 0 || acs_.col0 < 0 ||
      acs_.row0 + acs_.rows > height_ || acs_.col0 + acs_.cols > width_)
    throw std::invalid_argument("SamplingMask: ACS rectangle outside the grid");
  for (int r = acs_.row0; r < acs_.row0 + acs_.rows; ++r)
    for (int c = acs_.col0; c < acs_.col0 + acs_.cols; ++c)
      if (!at(r, c)) throw std::invalid_argument("SamplingMask: ACS region not fully sampled");
}

void KSpaceData::validate() const {
  if (data.height() != mask.height() || data.width() != mask.width())
    throw std::invalid_argument("KSpaceData: mask shape does not match data");
  const auto px = data.pixels();
  for (int c = 0; c < data.coils(); ++c) {
    auto coil = data.coil(c);
    for (std::size_t i = 0; i < px; ++i)
      if (!mask[i] && coil[i] != cplx{})
        throw std::invalid_argument("KSpaceData: non-zero sample outside the mask");
  }
}

void CoilSensitivities::validate(double tol) const {
  if (maps.empty()) throw std::invalid_argument("CoilSensitivities: empty maps");
  const auto px = maps.pixels();
  for (std::size_t i = 0; i < px; ++i) {
    double s = 0.0;
    for (int c = 0; c < maps.coils(); ++c) s += std::norm(maps.coil(c)[i]);
    if (!std::isfinite(s)) throw std::invalid_argument("CoilSensitivities: non-finite map");
    if (s != 0.0 && std::abs(s - 1.0) > tol)
      throw std::invalid_argument("CoilSensitivities: sum of squares deviates from 1 by " +
                                  std::to_string(std::abs(s - 1.0)));
  }
}

// ---------------------------------------------------------------------------
// Fourier operators

namespace {

struct PlanCache {
  std::mutex mutex;
  std::map<std::tuple<int, int, int>, fftw_plan> plans;

  ~PlanCache() {
    for (auto& [key, plan] : plans) fftw_destroy_plan(plan);
  }

  // In-place plan on an aligned buffer; reused via fftw_execute_dft.
  fftw_plan get(int height, int width, int sign) {
    std::lock_guard lock(mutex);
    auto key = std::make_tuple(height, width, sign);
    if (auto it = plans.find(key); it != plans.end()) return it->second;
    auto* buf = fftw_alloc_complex(static_cast<std::size_t>(height) * width);
    fftw_plan plan = fftw_plan_dft_2d(height, width, buf, buf, sign, FFTW_ESTIMATE);
    fftw_free(buf);
    if (!plan) throw std::runtime_error("fft2c: FFTW planning failed");
    plans.emplace(key, plan);
    return plan;
  }
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n) : ptr(fftw_alloc_complex(n)) {
    if (!ptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* ptr;
};

ComplexImage centered_transform(const ComplexImage& in, int sign) {
  in.validate();
  const int h = in.height();
  const int w = in.width();
  const int hh = h / 2;
  const int hw = w / 2;
  const double scale = 1.0 / std::sqrt(static_cast<double>(h) * w);
  fftw_plan plan = plan_cache().get(h, w, sign);

  ComplexImage out(in.coils(), h, w);
  FftwBuffer buf(in.pixels());
  auto* b = reinterpret_cast<cplx*>(buf.ptr);
  for (int c = 0; c < in.coils(); ++c) {
    auto src = in.coil(c);
    // ifftshift (== fftshift for even sides) into the buffer
    for (int r = 0; r < h; ++r) {
      const int rs = (r + hh) % h;
      for (int q = 0; q < w; ++q) b[r * w + q] = src[rs * w + (q + hw) % w];
    }
    fftw_execute_dft(plan, buf.ptr, buf.ptr);
    auto dst = out.coil(c);
    for (int r = 0; r < h; ++r) {
      const int rs = (r + hh) % h;
      for (int q = 0; q < w; ++q) dst[rs * w + (q + hw) % w] = b[r * w + q] * scale;
    }
  }
  return out;
}

void require_same_grid(const ComplexImage& a, const ComplexImage& b, const char* what) {
  if (!a.same_grid(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

void require_mask_grid(const ComplexImage& a, const SamplingMask& m, const char* what) {
  if (a.height() != m.height() || a.width() != m.width())
    throw std::invalid_argument(std::string(what) + ": mask shape mismatch");
}

}  // namespace

ComplexImage fft2c(const ComplexImage& image) { return centered_transform(image, FFTW_FORWARD); }

ComplexImage ifft2c(const ComplexImage& kspace) { return centered_transform(kspace, FFTW_BACKWARD); }

ComplexImage apply_coils(const ComplexImage& x, const CoilSensitivities& coils) {
  if (x.coils() != 1) throw std::invalid_argument("apply_coils: expected a single-coil image");
  require_same_grid(x, coils.maps, "apply_coils");
  ComplexImage out(coils.coils(), x.height(), x.width());
  auto src = x.coil(0);
  for (int c = 0; c < coils.coils(); ++c) {
    auto map = coils.maps.coil(c);
    auto dst = out.coil(c);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = map[i] * src[i];
  }
  return out;
}

ComplexImage combine_coils(const ComplexImage& y, const CoilSensitivities& coils) {
  if (y.coils() != coils.coils()) throw std::invalid_argument("combine_coils: coil count mismatch");
  require_same_grid(y, coils.maps, "combine_coils");
  ComplexImage out(1, y.height(), y.width());
  auto dst = out.coil(0);
  for (int c = 0; c < coils.coils(); ++c) {
    auto map = coils.maps.coil(c);
    auto src = y.coil(c);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += std::conj(map[i]) * src[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Undersampling

SamplingMask generate_vd_mask(int height, int width, double acceleration, int acs_lines,
                              std::uint64_t seed) {
  if (!(acceleration >= 1.0) || !std::isfinite(acceleration))
    throw std::invalid_argument("generate_vd_mask: acceleration must be >= 1");
  if (acs_lines < 0) throw std::invalid_argument("generate_vd_mask: acs_lines must be >= 0");
  const std::size_t total = static_cast<std::size_t>(height) * width;
  const Rect acs = centered_acs(height, width, acs_lines);
  if (acceleration == 1.0)
    return {height, width, std::vector<std::uint8_t>(total, 1), acs, 1.0};

  const double budget = static_cast<double>(total) / acceleration;
  if (static_cast<double>(acs.area()) >= budget)
    throw std::invalid_argument("generate_vd_mask: ACS block alone exhausts the sampling budget");

  // Squared distance of every non-ACS location from the k-space center.
  std::vector<double> r2;
  std::vector<std::size_t> idx;
  r2.reserve(total);
  idx.reserve(total);
  const double cy = height / 2;
  const double cx = width / 2;
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      if (acs.contains(r, c)) continue;
      r2.push_back((r - cy) * (r - cy) + (c - cx) * (c - cx));
      idx.push_back(static_cast<std::size_t>(r) * width + c);
    }
  const double target = budget - static_cast<double>(acs.area());
  auto expected = [&](double var) {
    double s = 0.0;
    for (double d : r2) s += std::exp(-d / (2.0 * var));
    return s;
  };
  if (expected(1e12) < target)
    throw std::invalid_argument("generate_vd_mask: acceleration not achievable");

  // Bisection on log-variance.
  double lo = std::log(1e-6);
  double hi = std::log(1e12);
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(std::exp(mid)) < target ? lo : hi) = mid;
  }
  const double var = std::exp(0.5 * (lo + hi));
  std::vector<double> prob(r2.size());
  for (std::size_t i = 0; i < r2.size(); ++i) prob[i] = std::exp(-r2[i] / (2.0 * var));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<std::uint8_t> grid(total, 0);
    for (int r = acs.row0; r < acs.row0 + acs.rows; ++r)
      for (int c = acs.col0; c < acs.col0 + acs.cols; ++c)
        grid[static_cast<std::size_t>(r) * width + c] = 1;
    for (std::size_t i = 0; i < prob.size(); ++i)
      if (uni(rng) < prob[i]) grid[idx[i]] = 1;
    SamplingMask mask(height, width, std::move(grid), acs, acceleration);
    const double achieved = mask.achieved_acceleration();
    if (std::abs(achieved - acceleration) <= 0.15 * acceleration) return mask;
  }
  throw std::runtime_error("generate_vd_mask: could not draw a mask within 15% of the target");
}

KSpaceData undersample(const ComplexImage& full_kspace, const SamplingMask& mask) {
  require_mask_grid(full_kspace, mask, "undersample");
  ComplexImage out(full_kspace.coils(), full_kspace.height(), full_kspace.width());
  const auto px = full_kspace.pixels();
  for (int c = 0; c < full_kspace.coils(); ++c) {
    auto src = full_kspace.coil(c);
    auto dst = out.coil(c);
    for (std::size_t i = 0; i < px; ++i)
      if (mask[i]) dst[i] = src[i];
  }
  return {std::move(out), mask};
}

KSpaceData undersample(const KSpaceData& y, const SamplingMask& mask) {
  return undersample(y.data, mask);
}

namespace {

KSpacePartition split_by_selection(const KSpaceData& y_u, std::vector<std::uint8_t> sel) {
  const auto& acq = y_u.mask;
  const Rect acs = acq.acs();
  const int h = acq.height();
  const int w = acq.width();
  const auto px = acq.pixels();
  std::vector<std::uint8_t> g1(px, 0);
  std::vector<std::uint8_t> g2(px, 0);
  for (std::size_t i = 0; i < px; ++i) {
    if (acq.in_acs(i)) sel[i] = 1;
    if (!acq[i]) continue;
    if (acq.in_acs(i)) {
      g1[i] = g2[i] = 1;
    } else if (sel[i]) {
      g1[i] = 1;
    } else {
      g2[i] = 1;
    }
  }
  SamplingMask m1(h, w, std::move(g1), acs, acq.nominal_acceleration());
  SamplingMask m2(h, w, std::move(g2), acs, acq.nominal_acceleration());
  SamplingMask selection(h, w, std::move(sel), acs, acq.nominal_acceleration());
  return {undersample(y_u.data, m1), undersample(y_u.data, m2), std::move(selection)};
}

}  // namespace

KSpacePartition partition_kspace(const KSpaceData& y_u, double rho, std::uint64_t seed) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("partition_kspace: rho must lie in (0, 1)");
  const auto& acq = y_u.mask;
  require_mask_grid(y_u.data, acq, "partition_kspace");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(rho);
  std::vector<std::uint8_t> sel(acq.pixels(), 0);
  for (std::size_t i = 0; i < sel.size(); ++i)
    if (acq[i] && !acq.in_acs(i)) sel[i] = coin(rng) ? 1 : 0;
  return split_by_selection(y_u, std::move(sel));
}

KSpacePartition partition_kspace(const KSpaceData& y_u, const SamplingMask& selection) {
  require_mask_grid(y_u.data, selection, "partition_kspace");
  return split_by_selection(y_u, {selection.grid().begin(), selection.grid().end()});
}

ComplexImage zero_fill_recon(const KSpaceData& y, const CoilSensitivities& coils) {
  require_mask_grid(y.data, y.mask, "zero_fill_recon");
  return combine_coils(ifft2c(y.data), coils);
}

ComplexImage forward_operator(const ComplexImage& x, const SamplingMask& mask,
                              const CoilSensitivities& coils) {
  return undersample(fft2c(apply_coils(x, coils)), mask).data;
}

ComplexImage adjoint_operator(const ComplexImage& k, const SamplingMask& mask,
                              const CoilSensitivities& coils) {
  return combine_coils(ifft2c(undersample(k, mask).data), coils);
}

}  // namespace dmsm
