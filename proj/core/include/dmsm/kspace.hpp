#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace dmsm {

using cplx = std::complex<double>;

class NonFiniteError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Complex grid with an optional coil axis, stored coil-major then row-major.
class ComplexImage {
 public:
  ComplexImage() = default;
  ComplexImage(int coils, int height, int width);
  ComplexImage(int coils, int height, int width, std::vector<cplx> data);

  int coils() const { return coils_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  cplx& operator()(int coil, int row, int col) { return data_[index(coil, row, col)]; }
  const cplx& operator()(int coil, int row, int col) const { return data_[index(coil, row, col)]; }
  cplx& operator[](std::size_t i) { return data_[i]; }
  const cplx& operator[](std::size_t i) const { return data_[i]; }

  std::span<cplx> coil(int c) { return {data_.data() + c * pixels(), pixels()}; }
  std::span<const cplx> coil(int c) const { return {data_.data() + c * pixels(), pixels()}; }
  std::span<cplx> data() { return data_; }
  std::span<const cplx> data() const { return data_; }

  bool same_shape(const ComplexImage& other) const {
    return coils_ == other.coils_ && height_ == other.height_ && width_ == other.width_;
  }
  bool same_grid(const ComplexImage& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// Throws std::invalid_argument on non-finite entries or an unsupported grid
  /// (sides must be even and at least 8).
  void validate() const;

  ComplexImage& operator+=(const ComplexImage& rhs);
  ComplexImage& operator-=(const ComplexImage& rhs);
  ComplexImage& operator*=(double s);

  double norm() const;

 private:
  std::size_t index(int coil, int row, int col) const {
    return (static_cast<std::size_t>(coil) * height_ + row) * width_ + col;
  }

  int coils_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<cplx> data_;
};

ComplexImage operator+(ComplexImage lhs, const ComplexImage& rhs);
ComplexImage operator-(ComplexImage lhs, const ComplexImage& rhs);
ComplexImage operator*(double s, ComplexImage x);

/// Real inner product Re<a, b> summed over every entry.
double real_inner(const ComplexImage& a, const ComplexImage& b);
cplx inner(const ComplexImage& a, const ComplexImage& b);

struct Rect {
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;

  bool contains(int r, int c) const {
    return r >= row0 && r < row0 + rows && c >= col0 && c < col0 + cols;
  }
  std::size_t area() const { return static_cast<std::size_t>(rows) * cols; }
  bool operator==(const Rect&) const = default;
};

/// Centered square of side `lines` (clamped to the grid).
Rect centered_acs(int height, int width, int lines);

/// Binary k-space sampling pattern. The ACS rectangle is always fully set.
class SamplingMask {
 public:
  SamplingMask() = default;
  SamplingMask(int height, int width, std::vector<std::uint8_t> grid, Rect acs = {},
               double nominal_acceleration = 1.0);

  static SamplingMask full(int height, int width);
  static SamplingMask zeros(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixels() const { return grid_.size(); }
  bool at(int row, int col) const { return grid_[static_cast<std::size_t>(row) * width_ + col] != 0; }
  bool operator[](std::size_t i) const { return grid_[i] != 0; }
  std::span<const std::uint8_t> grid() const { return grid_; }
  const Rect& acs() const { return acs_; }
  double nominal_acceleration() const { return nominal_acceleration_; }

  std::size_t count() const;
  /// H*W / (number of ones); infinity for an empty mask.
  double achieved_acceleration() const;
  bool in_acs(std::size_t i) const {
    return acs_.contains(static_cast<int>(i / width_), static_cast<int>(i % width_));
  }

  void validate() const;
  bool operator==(const SamplingMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> grid_;
  Rect acs_{};
  double nominal_acceleration_ = 1.0;
};

/// Multi-coil k-space together with the mask it was acquired under.
struct KSpaceData {
  ComplexImage data;
  SamplingMask mask;

  /// Checks shapes and that data is exactly zero outside the mask.
  void validate() const;
};

struct CoilSensitivities {
  ComplexImage maps;

  int coils() const { return maps.coils(); }
  /// Σ_c |C_c|² must be 1 (within tol) wherever it is non-zero.
  void validate(double tol = 1e-6) const;
};

/// Centered orthonormal 2D DFT applied per coil.
ComplexImage fft2c(const ComplexImage& image);
ComplexImage ifft2c(const ComplexImage& kspace);

ComplexImage apply_coils(const ComplexImage& x, const CoilSensitivities& coils);
ComplexImage combine_coils(const ComplexImage& y, const CoilSensitivities& coils);

/// Gaussian variable-density mask with expected sample count H*W/R.
SamplingMask generate_vd_mask(int height, int width, double acceleration, int acs_lines,
                              std::uint64_t seed);

KSpaceData undersample(const ComplexImage& full_kspace, const SamplingMask& mask);
KSpaceData undersample(const KSpaceData& y, const SamplingMask& mask);

struct KSpacePartition {
  KSpaceData p1;
  KSpaceData p2;
  /// Selection mask M: the sampled locations routed to p1 (ACS included).
  SamplingMask selection;
};

/// Random split of the acquired samples. Both partitions keep the ACS block.
KSpacePartition partition_kspace(const KSpaceData& y_u, double rho, std::uint64_t seed);
/// Split with an explicit selection mask (ACS is forced into it).
KSpacePartition partition_kspace(const KSpaceData& y_u, const SamplingMask& selection);

ComplexImage zero_fill_recon(const KSpaceData& y, const CoilSensitivities& coils);

/// k-space of x restricted to `mask`: M ⊙ F(C x).
ComplexImage forward_operator(const ComplexImage& x, const SamplingMask& mask,
                              const CoilSensitivities& coils);
/// Adjoint of forward_operator: S^H F^-1 (M ⊙ k).
ComplexImage adjoint_operator(const ComplexImage& k, const SamplingMask& mask,
                              const CoilSensitivities& coils);

}  // namespace dmsm
