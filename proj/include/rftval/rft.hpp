#pragma once

// Random field theory closed forms: Euler characteristic densities, expected
// EC, peak and cluster-extent family-wise p-values.

#include <cstddef>

#include "rftval/field.hpp"
#include "rftval/smoothness.hpp"

namespace rftval {

/// EC density rho_d(u) for d in 0..3, per unit resel.
double ec_density(int d, double u, const FieldSpec& field);

/// E[EC] = sum_d R_d rho_d(u).
double expected_ec(const ReselCounts& resels, double u, const FieldSpec& field);

/// 1 - exp(-E[EC](t_max)), with E[EC] floored at zero.
double peak_fwe_p(double t_max, const ReselCounts& resels, const FieldSpec& field);

/// The upper-most u with peak_fwe_p(u) == alpha, found by bisection.
double peak_threshold(double alpha, const ReselCounts& resels, const FieldSpec& field);

/// Parameters of the cluster-extent distribution P(N >= k) = exp(-beta k^(2/D)).
struct NoskoParams {
  double u = 0.0;
  double m = 0.0;           // expected number of clusters, E[EC](u)
  double ev_voxels = 0.0;   // expected suprathreshold volume
  double beta = 0.0;        // per voxel^(2/D)
  double resel_voxels = 0.0;  // voxels per resel, prod(fwhm_voxels)

  double mean_extent() const noexcept { return ev_voxels / m; }
};

NoskoParams nosko_params(double u, const ReselCounts& resels, const FieldSpec& field, std::size_t mask_voxel_count,
                         const Vec3& fwhm_voxels);

/// P(N >= k) for a cluster of k voxels.
double extent_survival(double k, const NoskoParams& params);

/// 1 - exp(-m P(N >= k)).
double cluster_fwe_p(double k, const NoskoParams& params);
double cluster_fwe_p(double k, double u, const ReselCounts& resels, const FieldSpec& field,
                     std::size_t mask_voxel_count, const Vec3& fwhm_voxels);

/// Cluster-forming threshold with upper tail probability p_unc in (0, 0.5].
double cdt_from_p(double p_unc, const FieldSpec& field);

}  // namespace rftval
