#pragma once

// First-level OLS contrast estimation and second-level t-maps.

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rftval/design.hpp"
#include "rftval/field.hpp"
#include "rftval/lattice.hpp"
#include "rftval/smoothness.hpp"

namespace rftval {

struct ContrastMap {
  Grid grid;
  Mask mask;
  std::vector<double> contrast_estimate;  // per voxel
  std::vector<double> residuals;          // scan-major standardized residuals; empty if not kept
  std::size_t n_scans = 0;
  double df = 0.0;
};

struct StatMap {
  Grid grid;
  Mask mask;
  std::vector<double> t_values;  // 0 outside the mask
  FieldSpec field;
  std::optional<SmoothnessEstimate> smoothness;
  std::optional<ReselCounts> resels;
  /// Standardized second-level residual fields, back to back; may be empty.
  std::vector<double> residuals;
  std::size_t n_residual_fields = 0;

  double df() const noexcept { return field.df; }
  double max_t() const;
  /// Fills smoothness and resels, from the residual fields unless `fwhm_mm`
  /// is given.
  void populate_smoothness(const std::optional<Vec3>& fwhm_mm = std::nullopt);
};

/// Least-squares fit of one design, reusable across datasets.
class FirstLevelModel {
 public:
  explicit FirstLevelModel(const DesignMatrix& design);

  ContrastMap fit(const TimeSeriesDataset& ds, bool keep_residuals = true) const;
  /// Contrast estimate only, c' beta per voxel.
  std::vector<double> contrast_estimate(const TimeSeriesDataset& ds) const;
  /// beta per voxel, rows = design columns.
  Eigen::MatrixXd betas(const TimeSeriesDataset& ds) const;

  double df() const noexcept { return static_cast<double>(design_.n_scans() - rank_); }
  std::span<const double> contrast_weights() const noexcept { return {weights_.data(), weights_.size()}; }

 private:
  DesignMatrix design_;
  Eigen::MatrixXd pinv_;             // columns x scans
  std::vector<double> weights_;      // c' pinv, one per scan
  Eigen::Index rank_ = 0;
};

ContrastMap fit_first_level(const TimeSeriesDataset& ds, const DesignMatrix& design);

/// Divides each voxel's residuals by the root mean square across fields, so
/// every masked voxel has unit mean square. Voxels with zero residual stay 0.
void standardize_residuals(std::span<double> fields, std::size_t n_fields, const Mask& mask);

// Second-level tests. Subjects are given as pointers to per-voxel contrast
// estimates on a shared grid.
StatMap one_sample_t(const Grid& grid, const Mask& mask, std::span<const double* const> subjects,
                     bool keep_residuals = true);
StatMap two_sample_t(const Grid& grid, const Mask& mask, std::span<const double* const> group_a,
                     std::span<const double* const> group_b, bool keep_residuals = true);

StatMap one_sample_t(std::span<const ContrastMap> maps);
StatMap two_sample_t(std::span<const ContrastMap> group_a, std::span<const ContrastMap> group_b);

}  // namespace rftval
