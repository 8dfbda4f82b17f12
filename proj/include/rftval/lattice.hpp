#pragma once

// Regular 3D lattices, masked volumes, and synthetic null data.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rftval {

using Index3 = std::array<std::size_t, 3>;
using Vec3 = std::array<double, 3>;

/// Voxel counts and physical voxel sizes (mm) of a 3D lattice. Storage order
/// everywhere in the library is x-fastest: index = x + nx * (y + ny * z).
class Grid {
 public:
  Grid(Index3 dims, Vec3 voxel_size_mm);

  const Index3& dims() const noexcept { return dims_; }
  const Vec3& voxel_size() const noexcept { return voxel_size_; }
  std::size_t size() const noexcept { return dims_[0] * dims_[1] * dims_[2]; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + dims_[0] * (y + dims_[1] * z);
  }
  Index3 coords(std::size_t index) const noexcept {
    return {index % dims_[0], (index / dims_[0]) % dims_[1], index / (dims_[0] * dims_[1])};
  }

  bool operator==(const Grid&) const = default;

 private:
  Index3 dims_;
  Vec3 voxel_size_;
};

enum class MaskShape { full_box, centered_ellipsoid };

using Mask = std::vector<std::uint8_t>;

std::size_t mask_count(const Mask& mask) noexcept;

/// Box mask, or the ellipsoid inscribed in the box (voxel centres tested).
Mask make_mask(const Grid& grid, MaskShape shape);

struct MaskedGrid {
  Grid grid;
  Mask mask;
};

MaskedGrid make_grid(Index3 dims, Vec3 voxel_size_mm, MaskShape shape);

/// Scalar field on a grid with its analysis mask. Statistics only ever see
/// masked voxels.
class Volume {
 public:
  Volume(Grid grid, Mask mask);
  Volume(Grid grid, Mask mask, std::vector<double> values);

  const Grid& grid() const noexcept { return grid_; }
  const Mask& mask() const noexcept { return mask_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }

  std::size_t masked_count() const noexcept { return mask_count(mask_); }
  double masked_mean() const;
  /// Unbiased sample variance over masked voxels.
  double masked_variance() const;

 private:
  Grid grid_;
  Mask mask_;
  std::vector<double> values_;
};

/// Per-subject 4D data, stored scan-major: scan s occupies
/// data[s * voxels, (s + 1) * voxels).
class TimeSeriesDataset {
 public:
  TimeSeriesDataset(Grid grid, Mask mask, std::size_t n_scans, double tr, std::uint64_t subject_id);

  const Grid& grid() const noexcept { return grid_; }
  const Mask& mask() const noexcept { return mask_; }
  std::size_t n_scans() const noexcept { return n_scans_; }
  double tr() const noexcept { return tr_; }
  std::uint64_t subject_id() const noexcept { return subject_id_; }

  std::span<const double> scan(std::size_t s) const noexcept {
    return {data_.data() + s * grid_.size(), grid_.size()};
  }
  std::span<double> scan(std::size_t s) noexcept { return {data_.data() + s * grid_.size(), grid_.size()}; }
  std::span<const double> data() const noexcept { return data_; }

  Volume scan_volume(std::size_t s) const;

 private:
  Grid grid_;
  Mask mask_;
  std::size_t n_scans_;
  double tr_;
  std::uint64_t subject_id_;
  std::vector<double> data_;
};

inline constexpr double fwhm_to_sigma = 0.42466090014400953;  // 1 / (2 sqrt(2 ln 2))

/// Unit-sum sampled Gaussian truncated at +-4 sigma. sigma == 0 gives {1}.
std::vector<double> gaussian_kernel(double sigma_voxels);

/// Standard-normal deviates at every voxel, a pure function of (grid, seed).
Volume white_noise(const Grid& grid, const Mask& mask, std::uint64_t seed);

/// Separable zero-padded convolution with unit-sum kernels (no rescaling).
Volume gaussian_convolve(const Volume& vol, const Vec3& fwhm_mm);

/// gaussian_convolve followed by 1 / sqrt(sum of squared kernel weights), so
/// that smoothed unit white noise keeps unit variance away from the borders.
Volume gaussian_smooth(const Volume& vol, const Vec3& fwhm_mm);

/// Smoothed unit-variance Gaussian noise without boundary attenuation: the
/// white noise is drawn on a grid padded by the kernel radius and only fully
/// supported voxels are kept, so the field is stationary over the whole grid.
Volume smooth_noise_field(const Grid& grid, const Mask& mask, const Vec3& fwhm_mm, std::uint64_t seed);

/// One synthetic subject: smoothed noise per scan, then stationary AR(1)
/// mixing in time, x_t = ar1 x_{t-1} + sqrt(1 - ar1^2) e_t.
/// Scan s is seeded with mix_seed(seed, {s}).
TimeSeriesDataset synth_subject_data(const Grid& grid, const Mask& mask, std::size_t n_scans, double tr,
                                     const Vec3& noise_fwhm_mm, double ar1, std::uint64_t seed);

/// Adds amplitude * profile(v) * regressor(t) to every voxel and scan.
TimeSeriesDataset inject_shared_signal(TimeSeriesDataset ds, std::span<const double> regressor, double amplitude,
                                       const Volume& spatial_profile);

}  // namespace rftval
