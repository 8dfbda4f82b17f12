// Monte Carlo oracles for the closed forms. Slow; labelled separately.

#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "rftval/harness.hpp"
#include "rftval/lattice.hpp"
#include "rftval/rft.hpp"
#include "rftval/seed.hpp"
#include "rftval/smoothness.hpp"

using namespace rftval;

namespace {

// Strict 26-neighbour local maxima above u; neighbours outside the grid are ignored.
std::size_t count_maxima(const Grid& g, const Volume& v, double u) {
  const auto& d = g.dims();
  std::size_t n = 0;
  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x) {
        const double c = v[g.index(x, y, z)];
        if (c <= u) continue;
        bool peak = true;
        for (int dz = -1; dz <= 1 && peak; ++dz)
          for (int dy = -1; dy <= 1 && peak; ++dy)
            for (int dx = -1; dx <= 1 && peak; ++dx) {
              if (!dx && !dy && !dz) continue;
              const long nx = static_cast<long>(x) + dx, ny = static_cast<long>(y) + dy, nz = static_cast<long>(z) + dz;
              if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<long>(d[0]) || ny >= static_cast<long>(d[1]) ||
                  nz >= static_cast<long>(d[2]))
                continue;
              if (v[g.index(nx, ny, nz)] >= c) peak = false;
            }
        n += peak;
      }
  return n;
}

}  // namespace

TEST_CASE("Gaussian fields: peak FWE and expected maxima") {
  Grid g({32, 32, 32}, {3, 3, 3});
  const Mask mask(g.size(), 1);
  const Vec3 fwhm{9, 9, 9};
  const auto R = resel_counts(g, mask, fwhm);
  const auto gauss = FieldSpec::gaussian();
  const double u_fwe = peak_threshold(0.05, R, gauss);
  // Threshold where E[EC] = 0.05, i.e. the same u by construction up to the
  // exponential link.
  const double u_ec = peak_threshold(-std::expm1(-0.05), R, gauss);
  CHECK(expected_ec(R, u_ec, gauss) == doctest::Approx(0.05).epsilon(1e-8));

  const std::size_t n_fwe = 1000, n_ec = 4000;
  std::size_t exceed = 0, maxima = 0;
  for (std::size_t r = 0; r < n_ec; ++r) {
    const Volume f = smooth_noise_field(g, mask, fwhm, mix_seed(777, {r}));
    if (r < n_fwe) {
      double best = -1e300;
      for (std::size_t i = 0; i < g.size(); ++i) best = std::max(best, f[i]);
      exceed += best > u_fwe;
    }
    maxima += count_maxima(g, f, u_ec);
  }
  const double fwe = static_cast<double>(exceed) / n_fwe;
  const double per_map = static_cast<double>(maxima) / n_ec;
  std::printf("gaussian 3-voxel: u=%.4f peak FWE=%.4f; maxima per map above %.4f = %.4f (E[EC] 0.05)\n", u_fwe, fwe,
              u_ec, per_map);
  CHECK(fwe >= 0.025);
  CHECK(fwe <= 0.075);
  CHECK(std::abs(per_map - 0.05) <= 0.10 * 0.05);
}

// Away from the lattice regime the closed form should be close to exact.
TEST_CASE("Gaussian fields at 6 voxels FWHM match the peak p-value") {
  Grid g({32, 32, 32}, {1, 1, 1});
  const Mask mask(g.size(), 1);
  const Vec3 fwhm{6, 6, 6};
  const auto R = resel_counts(g, mask, fwhm);
  const double u = peak_threshold(0.05, R, FieldSpec::gaussian());
  const std::size_t n = 1000;
  std::size_t exceed = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const Volume f = smooth_noise_field(g, mask, fwhm, mix_seed(778, {r}));
    double best = -1e300;
    for (std::size_t i = 0; i < g.size(); ++i) best = std::max(best, f[i]);
    exceed += best > u;
  }
  const double fwe = static_cast<double>(exceed) / n;
  std::printf("gaussian 6-voxel: u=%.4f peak FWE=%.4f\n", u, fwe);
  CHECK(std::abs(fwe - 0.05) <= 0.02);
}

TEST_CASE("t fields: mean cluster extent at p < 0.001") {
  ExperimentConfig c;
  c.smoothing_levels_mm = {9.0};
  c.regressors = {RegressorLabel::B1};
  c.inferences = {Inference::cluster};
  c.n_realizations = 2000;
  RunOptions opt;
  opt.collect_extents = true;
  const auto r = run_experiment(c, opt);
  REQUIRE(r.extent_diagnostics.size() == 1);
  const auto& d = r.extent_diagnostics[0];
  std::printf("t18 3-voxel clusters: %zu, mean extent %.2f, model ev/m %.2f, clusters/map %.3f vs E[EC] %.3f\n",
              d.n_clusters, d.mean_extent, d.mean_model_extent, d.mean_clusters_per_map, d.mean_expected_clusters);
  CHECK(std::abs(d.mean_extent - d.mean_model_extent) <= 0.25 * d.mean_model_extent);
}

TEST_CASE("smoothness estimator bias") {
  Grid g({32, 32, 32}, {3, 3, 3});
  const Mask mask(g.size(), 1);
  double previous_bias = 1e300;
  for (double fwhm_vox : {1.0, 1.5, 2.0, 3.0, 4.0}) {
    const double mm = 3 * fwhm_vox;
    std::vector<double> fields;
    for (std::size_t k = 0; k < 20; ++k) {
      const Volume f = smooth_noise_field(g, mask, {mm, mm, mm}, mix_seed(99, {k}));
      fields.insert(fields.end(), f.values().begin(), f.values().end());
    }
    const auto est = estimate_fwhm(g, mask, fields, 20);
    double bias = 0.0;
    for (int a = 0; a < 3; ++a) bias = std::max(bias, std::abs(est.fwhm_voxels[a] / fwhm_vox - 1));
    std::printf("smoothness %.1f voxels: estimate %.3f, relative bias %.3f\n", fwhm_vox, est.fwhm_voxels[0], bias);
    // Degrades monotonically towards one voxel.
    if (fwhm_vox <= 2.0) CHECK(bias <= previous_bias);
    previous_bias = bias;
    if (fwhm_vox >= 2.0) {
      CHECK(bias < 0.10);
      CHECK_FALSE(est.lattice_violation);
    }
  }
}
