#include "rftval/rft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "rftval/distributions.hpp"
#include "rftval/error.hpp"

namespace rftval {
namespace {

constexpr double four_ln2 = 4.0 * std::numbers::ln2;
constexpr double two_pi = 2.0 * std::numbers::pi;
const double gamma_5_2 = 0.75 * std::sqrt(std::numbers::pi);

}  // namespace

double ec_density(int d, double u, const FieldSpec& field) {
  field.validate();
  if (d < 0 || d > 3) fail(ErrorKind::invalid_argument, "EC density dimension must be 0..3, got " + std::to_string(d));
  if (d == 0) return marginal_tail(u, field);
  if (std::isinf(u)) return 0.0;

  if (field.kind == FieldKind::gaussian) {
    const double e = std::exp(-0.5 * u * u);
    switch (d) {
      case 1: return std::sqrt(four_ln2) / two_pi * e;
      case 2: return four_ln2 / std::pow(two_pi, 1.5) * u * e;
      default: return std::pow(four_ln2, 1.5) / (two_pi * two_pi) * (u * u - 1.0) * e;
    }
  }
  const double v = field.df;
  const double decay = std::pow(1.0 + u * u / v, -0.5 * (v - 1.0));
  switch (d) {
    case 1: return std::sqrt(four_ln2) / two_pi * decay;
    case 2: {
      const double ratio = std::exp(std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v)) / std::sqrt(0.5 * v);
      return four_ln2 / std::pow(two_pi, 1.5) * ratio * u * decay;
    }
    default: return std::pow(four_ln2, 1.5) / (two_pi * two_pi) * decay * ((v - 1.0) / v * u * u - 1.0);
  }
}

double expected_ec(const ReselCounts& resels, double u, const FieldSpec& field) {
  double e = 0.0;
  for (int d = 0; d <= 3; ++d) {
    require(resels[d] >= 0.0 && std::isfinite(resels[d]), "resel counts must be finite and >= 0");
    if (resels[d] != 0.0) e += resels[d] * ec_density(d, u, field);
  }
  return e;
}

double peak_fwe_p(double t_max, const ReselCounts& resels, const FieldSpec& field) {
  const double e = std::max(0.0, expected_ec(resels, t_max, field));
  return std::clamp(-std::expm1(-e), 0.0, 1.0);
}

double peak_threshold(double alpha, const ReselCounts& resels, const FieldSpec& field) {
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  // Walk down from a threshold where the p-value is negligible until the
  // p-value first reaches alpha; the crossing is then bracketed.
  // Heavy-tailed low-df fields can need thresholds far above 64.
  double hi = 64.0;
  while (peak_fwe_p(hi, resels, field) >= alpha) {
    hi *= 2.0;
    if (hi > 1e8) fail(ErrorKind::numeric_failure, "peak p-value does not fall below alpha at any finite threshold");
  }
  double lo = hi;
  const double step = hi <= 64.0 ? 0.25 : hi / 256.0;
  while (peak_fwe_p(lo, resels, field) < alpha) {
    hi = lo;
    lo -= step;
    if (lo < -64.0) fail(ErrorKind::numeric_failure, "peak threshold bisection could not bracket alpha");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (peak_fwe_p(mid, resels, field) >= alpha) lo = mid;
    else hi = mid;
  }
  const double u = 0.5 * (lo + hi);
  if (!(std::abs(peak_fwe_p(u, resels, field) - alpha) < 1e-10))
    fail(ErrorKind::numeric_failure, "peak threshold bisection did not converge");
  return u;
}

NoskoParams nosko_params(double u, const ReselCounts& resels, const FieldSpec& field, std::size_t mask_voxel_count,
                         const Vec3& fwhm_voxels) {
  require(std::isfinite(u), "cluster-forming threshold must be finite");
  require(mask_voxel_count > 0, "mask voxel count must be > 0");
  NoskoParams p;
  p.u = u;
  p.m = expected_ec(resels, u, field);
  p.ev_voxels = static_cast<double>(mask_voxel_count) * marginal_tail(u, field);
  p.resel_voxels = fwhm_voxels[0] * fwhm_voxels[1] * fwhm_voxels[2];
  if (!(p.m > 0.0) || !(p.ev_voxels > 0.0))
    fail(ErrorKind::out_of_regime, "threshold u = " + std::to_string(u) + " gives no expected clusters or volume");
  p.beta = std::pow(gamma_5_2 * p.m / p.ev_voxels, 2.0 / 3.0);
  return p;
}

double extent_survival(double k, const NoskoParams& params) {
  require(k >= 0.0, "cluster extent must be >= 0");
  return std::exp(-params.beta * std::pow(k, 2.0 / 3.0));
}

double cluster_fwe_p(double k, const NoskoParams& params) {
  return std::clamp(-std::expm1(-params.m * extent_survival(k, params)), 0.0, 1.0);
}

double cluster_fwe_p(double k, double u, const ReselCounts& resels, const FieldSpec& field,
                     std::size_t mask_voxel_count, const Vec3& fwhm_voxels) {
  return cluster_fwe_p(k, nosko_params(u, resels, field, mask_voxel_count, fwhm_voxels));
}

double cdt_from_p(double p_unc, const FieldSpec& field) {
  require(p_unc > 0.0 && p_unc <= 0.5, "uncorrected p must lie in (0, 0.5]");
  if (p_unc == 0.5) return 0.0;
  return marginal_upper_quantile(p_unc, field);
}

}  // namespace rftval
