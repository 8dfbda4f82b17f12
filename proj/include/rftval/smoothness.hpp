#pragma once

// Residual smoothness (FWHM) and resel counts of the search region.

#include <array>
#include <span>

#include "rftval/lattice.hpp"

namespace rftval {

struct SmoothnessEstimate {
  Vec3 fwhm_mm{};
  Vec3 fwhm_voxels{};
  std::size_t n_fields = 0;
  /// True when any axis has sub-voxel smoothness: the lattice no longer
  /// approximates a continuous field. For estimates this means below
  /// sqrt(4 ln 2) voxels, the value a true FWHM of one voxel produces.
  bool lattice_violation = false;

  static SmoothnessEstimate from_mm(const Grid& grid, const Vec3& fwhm_mm, std::size_t n_fields = 0);
};

/// Resel counts R0..R3 of the masked search region.
struct ReselCounts {
  std::array<double, 4> R{};

  double operator[](std::size_t d) const noexcept { return R[d]; }
  ReselCounts operator+(const ReselCounts& o) const noexcept {
    return {{R[0] + o.R[0], R[1] + o.R[1], R[2] + o.R[2], R[3] + o.R[3]}};
  }
};

/// Per-axis FWHM from the variance of forward differences of unit-variance
/// fields: lambda = mean squared difference over masked neighbour pairs and
/// fields, FWHM = sqrt(4 ln 2 / lambda) voxels.
/// `fields` holds n_fields volumes back to back, each grid.size() long.
SmoothnessEstimate estimate_fwhm(const Grid& grid, const Mask& mask, std::span<const double> fields,
                                 std::size_t n_fields);
SmoothnessEstimate estimate_fwhm(std::span<const Volume> fields, const Mask& mask);

/// Closed form for a box of side lengths a, b, c measured in FWHM units.
ReselCounts box_resels(const Vec3& sides_fwhm);

/// Resel counts of the mask. A full-box mask uses the closed form; other masks
/// are measured as the union of voxel cubes (Lipschitz-Killing curvatures of
/// the cubical complex, counted cell by cell).
ReselCounts resel_counts(const Grid& grid, const Mask& mask, const Vec3& fwhm_mm);

/// The same cell counting applied unconditionally (exposed for tests).
ReselCounts cubical_resel_counts(const Grid& grid, const Mask& mask, const Vec3& fwhm_mm);

}  // namespace rftval
