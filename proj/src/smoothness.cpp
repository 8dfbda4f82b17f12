#include "rftval/smoothness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "rftval/error.hpp"

namespace rftval {
namespace {

constexpr double four_ln2 = 4.0 * std::numbers::ln2;

bool is_full(const Mask& mask) {
  return std::all_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
}

}  // namespace

SmoothnessEstimate SmoothnessEstimate::from_mm(const Grid& grid, const Vec3& fwhm_mm, std::size_t n_fields) {
  SmoothnessEstimate s;
  s.fwhm_mm = fwhm_mm;
  s.n_fields = n_fields;
  for (int a = 0; a < 3; ++a) {
    require(std::isfinite(fwhm_mm[a]) && fwhm_mm[a] > 0.0, "fwhm must be > 0 on every axis");
    s.fwhm_voxels[a] = fwhm_mm[a] / grid.voxel_size()[a];
    if (s.fwhm_voxels[a] < 1.0) s.lattice_violation = true;
  }
  return s;
}

SmoothnessEstimate estimate_fwhm(const Grid& grid, const Mask& mask, std::span<const double> fields,
                                 std::size_t n_fields) {
  require(mask.size() == grid.size(), "mask size does not match grid");
  require(fields.size() == n_fields * grid.size(), "field storage does not match the field count");
  if (n_fields < 2) fail(ErrorKind::insufficient_data, "smoothness estimation needs at least 2 fields");

  const auto& d = grid.dims();
  const std::array<std::size_t, 3> stride{1, d[0], d[0] * d[1]};
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  std::array<std::size_t, 3> pairs{0, 0, 0};

  // Per-field partial sums keep the accumulation order fixed.
  for (std::size_t f = 0; f < n_fields; ++f) {
    const double* v = fields.data() + f * grid.size();
    std::array<double, 3> partial{0.0, 0.0, 0.0};
    for (std::size_t z = 0; z < d[2]; ++z)
      for (std::size_t y = 0; y < d[1]; ++y)
        for (std::size_t x = 0; x < d[0]; ++x) {
          const std::size_t i = grid.index(x, y, z);
          if (!mask[i]) continue;
          const std::array<bool, 3> has_next{x + 1 < d[0], y + 1 < d[1], z + 1 < d[2]};
          for (int a = 0; a < 3; ++a) {
            if (!has_next[a] || !mask[i + stride[a]]) continue;
            const double diff = v[i + stride[a]] - v[i];
            partial[a] += diff * diff;
            if (f == 0) ++pairs[a];
          }
        }
    for (int a = 0; a < 3; ++a) sum[a] += partial[a];
  }

  Vec3 fwhm_mm{};
  for (int a = 0; a < 3; ++a) {
    if (pairs[a] == 0)
      fail(ErrorKind::degenerate_smoothness, "no masked neighbour pairs along axis " + std::to_string(a));
    const double lambda = sum[a] / (static_cast<double>(pairs[a]) * static_cast<double>(n_fields));
    if (!(lambda > 0.0))
      fail(ErrorKind::degenerate_smoothness, "zero derivative variance along axis " + std::to_string(a));
    fwhm_mm[a] = std::sqrt(four_ln2 / lambda) * grid.voxel_size()[a];
  }
  auto est = SmoothnessEstimate::from_mm(grid, fwhm_mm, n_fields);
  // A lattice field with true FWHM f voxels has lag-one correlation 2^(-1/f^2),
  // so f = 1 gives lambda = 1 and an estimate of sqrt(4 ln 2) voxels. Anything
  // rougher came from sub-voxel smoothness; white noise lands at sqrt(2 ln 2).
  for (int a = 0; a < 3; ++a)
    if (est.fwhm_voxels[a] < std::sqrt(four_ln2)) est.lattice_violation = true;
  return est;
}

SmoothnessEstimate estimate_fwhm(std::span<const Volume> fields, const Mask& mask) {
  if (fields.size() < 2) fail(ErrorKind::insufficient_data, "smoothness estimation needs at least 2 fields");
  const Grid& grid = fields.front().grid();
  std::vector<double> flat;
  flat.reserve(fields.size() * grid.size());
  for (const auto& f : fields) {
    require(f.grid() == grid, "all residual fields must share one grid");
    flat.insert(flat.end(), f.values().begin(), f.values().end());
  }
  return estimate_fwhm(grid, mask, flat, fields.size());
}

ReselCounts box_resels(const Vec3& s) {
  return {{1.0, s[0] + s[1] + s[2], s[0] * s[1] + s[1] * s[2] + s[2] * s[0], s[0] * s[1] * s[2]}};
}

ReselCounts cubical_resel_counts(const Grid& grid, const Mask& mask, const Vec3& fwhm_mm) {
  require(mask.size() == grid.size(), "mask size does not match grid");
  if (mask_count(mask) == 0) fail(ErrorKind::invalid_argument, "resel counts of an empty mask");
  Vec3 len{};
  for (int a = 0; a < 3; ++a) {
    require(std::isfinite(fwhm_mm[a]) && fwhm_mm[a] > 0.0, "fwhm must be > 0 on every axis");
    len[a] = grid.voxel_size()[a] / fwhm_mm[a];
  }

  // A cell of the vertex lattice is (lower corner, axis bitmask). It belongs
  // to the union of voxel cubes when any voxel sharing it is masked; along an
  // axis the cell spans, that voxel index equals the corner, otherwise it is
  // the corner or the one before.
  const auto& d = grid.dims();
  auto voxel_on = [&](std::ptrdiff_t x, std::ptrdiff_t y, std::ptrdiff_t z) {
    if (x < 0 || y < 0 || z < 0) return false;
    if (x >= static_cast<std::ptrdiff_t>(d[0]) || y >= static_cast<std::ptrdiff_t>(d[1]) ||
        z >= static_cast<std::ptrdiff_t>(d[2]))
      return false;
    return mask[grid.index(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z))] !=
           0;
  };
  std::array<double, 8> count{};
  for (std::size_t cz = 0; cz <= d[2]; ++cz)
    for (std::size_t cy = 0; cy <= d[1]; ++cy)
      for (std::size_t cx = 0; cx <= d[0]; ++cx) {
        const std::array<std::ptrdiff_t, 3> c{static_cast<std::ptrdiff_t>(cx), static_cast<std::ptrdiff_t>(cy),
                                              static_cast<std::ptrdiff_t>(cz)};
        for (unsigned type = 0; type < 8; ++type) {
          bool in = false;
          bool out_of_range = false;
          for (int a = 0; a < 3; ++a)
            if ((type >> a) & 1u)
              if (c[a] >= static_cast<std::ptrdiff_t>(d[a])) out_of_range = true;
          if (out_of_range) continue;
          for (unsigned corner = 0; corner < 8 && !in; ++corner) {
            std::array<std::ptrdiff_t, 3> v = c;
            bool valid = true;
            for (int a = 0; a < 3; ++a) {
              const bool back = (corner >> a) & 1u;
              if ((type >> a) & 1u) {
                if (back) valid = false;
              } else if (back) {
                v[a] -= 1;
              }
            }
            if (valid) in = voxel_on(v[0], v[1], v[2]);
          }
          if (in) count[type] += 1.0;
        }
      }

  // L_k = sum over open cells of (-1)^(dim - k) times the k-th elementary
  // symmetric polynomial of the cell's side lengths.
  ReselCounts r;
  for (unsigned type = 0; type < 8; ++type) {
    if (count[type] == 0.0) continue;
    std::array<double, 4> e{1.0, 0.0, 0.0, 0.0};
    int dim = 0;
    for (int a = 0; a < 3; ++a)
      if ((type >> a) & 1u) {
        ++dim;
        for (int k = dim; k >= 1; --k) e[k] += e[k - 1] * len[a];
      }
    for (int k = 0; k <= dim; ++k) r.R[k] += ((dim - k) % 2 ? -1.0 : 1.0) * count[type] * e[k];
  }
  return r;
}

ReselCounts resel_counts(const Grid& grid, const Mask& mask, const Vec3& fwhm_mm) {
  require(mask.size() == grid.size(), "mask size does not match grid");
  if (mask_count(mask) == 0) fail(ErrorKind::invalid_argument, "resel counts of an empty mask");
  if (!is_full(mask)) return cubical_resel_counts(grid, mask, fwhm_mm);
  Vec3 sides{};
  for (int a = 0; a < 3; ++a) {
    require(std::isfinite(fwhm_mm[a]) && fwhm_mm[a] > 0.0, "fwhm must be > 0 on every axis");
    sides[a] = static_cast<double>(grid.dims()[a]) * grid.voxel_size()[a] / fwhm_mm[a];
  }
  return box_resels(sides);
}

}  // namespace rftval
