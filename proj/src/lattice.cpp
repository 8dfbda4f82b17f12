#include "rftval/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "rftval/error.hpp"
#include "rftval/seed.hpp"

namespace rftval {

Grid::Grid(Index3 dims, Vec3 voxel_size_mm) : dims_(dims), voxel_size_(voxel_size_mm) {
  for (int a = 0; a < 3; ++a) {
    require(dims[a] >= 1, "grid dimension " + std::to_string(a) + " must be >= 1");
    require(std::isfinite(voxel_size_mm[a]) && voxel_size_mm[a] > 0.0,
            "voxel size on axis " + std::to_string(a) + " must be > 0 mm");
  }
}

std::size_t mask_count(const Mask& mask) noexcept {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

Mask make_mask(const Grid& grid, MaskShape shape) {
  Mask mask(grid.size(), 1);
  if (shape == MaskShape::full_box) return mask;
  const auto& d = grid.dims();
  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x) {
        const Index3 c{x, y, z};
        double r2 = 0.0;
        for (int a = 0; a < 3; ++a) {
          const double half = 0.5 * static_cast<double>(d[a]);
          const double u = (static_cast<double>(c[a]) + 0.5 - half) / half;
          r2 += u * u;
        }
        mask[grid.index(x, y, z)] = r2 <= 1.0 ? 1 : 0;
      }
  return mask;
}

MaskedGrid make_grid(Index3 dims, Vec3 voxel_size_mm, MaskShape shape) {
  Grid grid(dims, voxel_size_mm);
  Mask mask = make_mask(grid, shape);
  return {std::move(grid), std::move(mask)};
}

Volume::Volume(Grid grid, Mask mask) : Volume(grid, std::move(mask), std::vector<double>(grid.size(), 0.0)) {}

Volume::Volume(Grid grid, Mask mask, std::vector<double> values)
    : grid_(std::move(grid)), mask_(std::move(mask)), values_(std::move(values)) {
  require(mask_.size() == grid_.size(), "mask size does not match grid");
  require(values_.size() == grid_.size(), "value count does not match grid");
}

double Volume::masked_mean() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (mask_[i]) {
      sum += values_[i];
      ++n;
    }
  require(n > 0, "empty mask");
  return sum / static_cast<double>(n);
}

double Volume::masked_variance() const {
  const double mean = masked_mean();
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (mask_[i]) {
      const double d = values_[i] - mean;
      ss += d * d;
      ++n;
    }
  require(n > 1, "variance needs at least two masked voxels");
  return ss / static_cast<double>(n - 1);
}

TimeSeriesDataset::TimeSeriesDataset(Grid grid, Mask mask, std::size_t n_scans, double tr, std::uint64_t subject_id)
    : grid_(std::move(grid)), mask_(std::move(mask)), n_scans_(n_scans), tr_(tr), subject_id_(subject_id) {
  require(n_scans >= 2, "a dataset needs at least 2 scans");
  require(std::isfinite(tr) && tr > 0.0, "tr must be > 0 s");
  require(mask_.size() == grid_.size(), "mask size does not match grid");
  data_.assign(grid_.size() * n_scans, 0.0);
}

Volume TimeSeriesDataset::scan_volume(std::size_t s) const {
  auto sc = scan(s);
  return Volume(grid_, mask_, std::vector<double>(sc.begin(), sc.end()));
}

std::vector<double> gaussian_kernel(double sigma_voxels) {
  require(std::isfinite(sigma_voxels) && sigma_voxels >= 0.0, "kernel width must be >= 0");
  if (sigma_voxels == 0.0) return {1.0};
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma_voxels));
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double x = static_cast<double>(k) / sigma_voxels;
    w[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * x * x);
  }
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= sum;
  return w;
}

namespace {

enum class Border { zero_pad, valid };

// One-dimensional convolution along `axis`. In valid mode the output is
// shorter by the kernel width minus one and every output sample has full
// support.
std::vector<double> convolve_axis(const std::vector<double>& in, Index3& dims, int axis, const std::vector<double>& w,
                                  Border border) {
  const std::size_t n = dims[axis];
  const std::size_t width = w.size();
  const std::size_t radius = (width - 1) / 2;
  const std::size_t n_out = border == Border::valid ? n - 2 * radius : n;
  const std::ptrdiff_t offset = border == Border::valid ? 0 : -static_cast<std::ptrdiff_t>(radius);

  std::size_t inner = 1;
  for (int a = 0; a < axis; ++a) inner *= dims[a];
  std::size_t outer = 1;
  for (int a = axis + 1; a < 3; ++a) outer *= dims[a];

  std::vector<double> out(inner * n_out * outer, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = in.data() + o * n * inner;
    double* dst = out.data() + o * n_out * inner;
    for (std::size_t i = 0; i < n_out; ++i) {
      const auto first = static_cast<std::ptrdiff_t>(i) + offset;
      const std::size_t k_lo = first < 0 ? static_cast<std::size_t>(-first) : 0;
      std::size_t k_hi = width;
      if (first + static_cast<std::ptrdiff_t>(width) > static_cast<std::ptrdiff_t>(n))
        k_hi = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(n) - first);
      double* row = dst + i * inner;
      if (inner == 1) {
        double acc = 0.0;
        for (std::size_t k = k_lo; k < k_hi; ++k) acc += w[k] * src[first + static_cast<std::ptrdiff_t>(k)];
        *row = acc;
      } else {
        for (std::size_t k = k_lo; k < k_hi; ++k) {
          const double wk = w[k];
          const double* s = src + (first + static_cast<std::ptrdiff_t>(k)) * static_cast<std::ptrdiff_t>(inner);
          for (std::size_t j = 0; j < inner; ++j) row[j] += wk * s[j];
        }
      }
    }
  }
  dims[axis] = n_out;
  return out;
}

std::array<std::vector<double>, 3> axis_kernels(const Grid& grid, const Vec3& fwhm_mm) {
  std::array<std::vector<double>, 3> k;
  for (int a = 0; a < 3; ++a) {
    require(std::isfinite(fwhm_mm[a]) && fwhm_mm[a] >= 0.0, "fwhm must be >= 0 on every axis");
    k[a] = gaussian_kernel(fwhm_mm[a] * fwhm_to_sigma / grid.voxel_size()[a]);
  }
  return k;
}

double variance_scale(const std::array<std::vector<double>, 3>& kernels) {
  double ss = 1.0;
  for (const auto& k : kernels) ss *= std::inner_product(k.begin(), k.end(), k.begin(), 0.0);
  return 1.0 / std::sqrt(ss);
}

void fill_normal(std::span<double> out, std::uint64_t seed) {
  Engine engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out) v = normal(engine);
}

}  // namespace

Volume white_noise(const Grid& grid, const Mask& mask, std::uint64_t seed) {
  Volume out(grid, mask);
  fill_normal(out.values(), seed);
  return out;
}

Volume gaussian_convolve(const Volume& vol, const Vec3& fwhm_mm) {
  const auto kernels = axis_kernels(vol.grid(), fwhm_mm);
  std::vector<double> data(vol.values().begin(), vol.values().end());
  Index3 dims = vol.grid().dims();
  for (int a = 0; a < 3; ++a)
    if (kernels[a].size() > 1) data = convolve_axis(data, dims, a, kernels[a], Border::zero_pad);
  return Volume(vol.grid(), vol.mask(), std::move(data));
}

Volume gaussian_smooth(const Volume& vol, const Vec3& fwhm_mm) {
  const auto kernels = axis_kernels(vol.grid(), fwhm_mm);
  Volume out = gaussian_convolve(vol, fwhm_mm);
  const double scale = variance_scale(kernels);
  if (scale != 1.0)
    for (double& v : out.values()) v *= scale;
  return out;
}

Volume smooth_noise_field(const Grid& grid, const Mask& mask, const Vec3& fwhm_mm, std::uint64_t seed) {
  const auto kernels = axis_kernels(grid, fwhm_mm);
  Index3 dims = grid.dims();
  for (int a = 0; a < 3; ++a) dims[a] += kernels[a].size() - 1;
  std::vector<double> data(dims[0] * dims[1] * dims[2]);
  fill_normal(data, seed);
  for (int a = 0; a < 3; ++a)
    if (kernels[a].size() > 1) data = convolve_axis(data, dims, a, kernels[a], Border::valid);
  const double scale = variance_scale(kernels);
  if (scale != 1.0)
    for (double& v : data) v *= scale;
  return Volume(grid, mask, std::move(data));
}

TimeSeriesDataset synth_subject_data(const Grid& grid, const Mask& mask, std::size_t n_scans, double tr,
                                     const Vec3& noise_fwhm_mm, double ar1, std::uint64_t seed) {
  require(std::isfinite(ar1) && ar1 >= 0.0 && ar1 < 1.0, "ar1 must lie in [0, 1)");
  TimeSeriesDataset ds(grid, mask, n_scans, tr, seed);
  const double innovation = std::sqrt(1.0 - ar1 * ar1);
  for (std::size_t s = 0; s < n_scans; ++s) {
    const Volume eps = smooth_noise_field(grid, mask, noise_fwhm_mm, mix_seed(seed, {s}));
    auto cur = ds.scan(s);
    const auto e = eps.values();
    if (s == 0) {
      std::copy(e.begin(), e.end(), cur.begin());
    } else {
      auto prev = ds.scan(s - 1);
      for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = ar1 * prev[i] + innovation * e[i];
    }
  }
  return ds;
}

TimeSeriesDataset inject_shared_signal(TimeSeriesDataset ds, std::span<const double> regressor, double amplitude,
                                       const Volume& spatial_profile) {
  require(regressor.size() == ds.n_scans(), "regressor length must equal the scan count");
  require(spatial_profile.grid() == ds.grid(), "spatial profile must share the dataset grid");
  if (amplitude == 0.0) return ds;
  const auto profile = spatial_profile.values();
  for (std::size_t s = 0; s < ds.n_scans(); ++s) {
    const double a = amplitude * regressor[s];
    auto sc = ds.scan(s);
    for (std::size_t i = 0; i < sc.size(); ++i) sc[i] += a * profile[i];
  }
  return ds;
}

}  // namespace rftval
