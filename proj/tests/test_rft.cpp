#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "rftval/distributions.hpp"
#include "rftval/error.hpp"
#include "rftval/rft.hpp"
#include "rftval/smoothness.hpp"

using namespace rftval;

TEST_CASE("tail functions against quadrature") {
  for (double u : {-2.0, 0.0, 0.5, 1.6449, 2.3, 3.1, 4.2, 5.5}) CHECK(std::abs(normal_tail(u) - oracle::normal_tail(u)) < 1e-9);
  for (double v : {1.0, 3.0, 9.0, 18.0, 40.0})
    for (double u : {-1.5, 0.0, 1.0, 2.2, 3.6105, 5.0, 8.0}) CHECK(std::abs(t_tail(u, v) - oracle::t_tail(u, v)) < 1e-9);

  // Quantiles against bisection on the quadrature tails.
  const double q = oracle::upper_quantile([](double u) { return oracle::t_tail(u, 18); }, 0.001);
  CHECK(std::abs(cdt_from_p(0.001, FieldSpec::student_t(18)) - q) < 1e-9);
  CHECK(cdt_from_p(0.001, FieldSpec::student_t(18)) == doctest::Approx(3.6105).epsilon(1e-4));
  const double qn = oracle::upper_quantile(oracle::normal_tail, 0.01);
  CHECK(std::abs(cdt_from_p(0.01, FieldSpec::gaussian()) - qn) < 1e-9);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
}

TEST_CASE("cdt_from_p") {
  CHECK(cdt_from_p(0.5, FieldSpec::student_t(7)) == 0.0);
  CHECK(cdt_from_p(0.5, FieldSpec::gaussian()) == 0.0);
  for (double p : {0.3, 0.05, 0.01, 0.001, 1e-6}) {
    CHECK(std::abs(t_tail(cdt_from_p(p, FieldSpec::student_t(18)), 18) - p) < 1e-12);
    CHECK(std::abs(normal_tail(cdt_from_p(p, FieldSpec::gaussian())) - p) < 1e-12);
  }
  CHECK_THROWS_AS(cdt_from_p(0.0, FieldSpec::gaussian()), Error);
  CHECK_THROWS_AS(cdt_from_p(0.6, FieldSpec::gaussian()), Error);
}

TEST_CASE("EC densities") {
  const auto g = FieldSpec::gaussian();
  CHECK(ec_density(0, 0.0, g) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(ec_density(3, 1.0, g)) < 1e-16);
  CHECK(std::abs(ec_density(0, 3.6105, FieldSpec::student_t(18)) - 0.001) < 1e-5);
  CHECK_THROWS_AS(ec_density(4, 1.0, g), Error);
  CHECK_THROWS_AS(ec_density(-1, 1.0, g), Error);

  // The t densities approach the Gaussian ones as df grows.
  for (int d = 0; d <= 3; ++d)
    CHECK(ec_density(d, 3.0, FieldSpec::student_t(1e7)) == doctest::Approx(ec_density(d, 3.0, g)).epsilon(1e-5));

  // Direct evaluation of the t(18) closed forms.
  const double v = 18, u = 3.0, l = 4 * std::log(2.0);
  const double decay = std::pow(1 + u * u / v, -(v - 1) / 2);
  const double ratio = std::tgamma((v + 1) / 2) / (std::sqrt(v / 2) * std::tgamma(v / 2));
  const auto t = FieldSpec::student_t(v);
  CHECK(ec_density(1, u, t) == doctest::Approx(std::sqrt(l) / (2 * std::numbers::pi) * decay).epsilon(1e-13));
  CHECK(ec_density(2, u, t) == doctest::Approx(l / std::pow(2 * std::numbers::pi, 1.5) * ratio * u * decay).epsilon(1e-12));
  CHECK(ec_density(3, u, t) ==
        doctest::Approx(std::pow(l, 1.5) / std::pow(2 * std::numbers::pi, 2) * decay * ((v - 1) / v * u * u - 1)).epsilon(1e-13));
}

TEST_CASE("expected EC") {
  const ReselCounts point{{1, 0, 0, 0}};
  CHECK(expected_ec(point, 1.6449, FieldSpec::gaussian()) == doctest::Approx(0.05).epsilon(1e-4));
  CHECK(expected_ec(point, 1.6448536269514722, FieldSpec::gaussian()) == doctest::Approx(0.05).epsilon(1e-12));
  const auto R = box_resels({10, 8, 6});
  CHECK(expected_ec(R, 1e6, FieldSpec::gaussian()) == doctest::Approx(0.0));
  CHECK(expected_ec(R, 200.0, FieldSpec::student_t(18)) < 1e-12);

  // Additivity over disjoint boxes, each counted with its own R0.
  const auto A = box_resels({4, 5, 6}), B = box_resels({2, 3, 7});
  for (double u : {2.0, 3.5, 5.0})
    CHECK(expected_ec(A + B, u, FieldSpec::student_t(12)) ==
          doctest::Approx(expected_ec(A, u, FieldSpec::student_t(12)) + expected_ec(B, u, FieldSpec::student_t(12))).epsilon(1e-13));
}

TEST_CASE("peak p-values and thresholds") {
  const auto R = box_resels({32.0 / 3, 32.0 / 3, 32.0 / 3});
  for (auto f : {FieldSpec::gaussian(), FieldSpec::student_t(18), FieldSpec::student_t(5)}) {
    const double u = peak_threshold(0.05, R, f);
    CHECK(std::abs(peak_fwe_p(u, R, f) - 0.05) < 1e-9);
    double prev = 1.0;
    for (double t = 2.5; t < 9; t += 0.25) {
      const double p = peak_fwe_p(t, R, f);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      CHECK((p < prev || p == 1.0));
      prev = p;
    }
  }
  // Poisson clumping linearization at high thresholds.
  const auto t18 = FieldSpec::student_t(18);
  for (double u = 5; u < 12; u += 0.5) {
    const double e = expected_ec(R, u, t18);
    if (e <= 0.1) CHECK(std::abs(-std::expm1(-e) - e) <= 0.005);
  }
  CHECK_THROWS_AS(peak_threshold(0.0, R, t18), Error);
  CHECK_THROWS_AS(peak_threshold(1.0, R, t18), Error);
}

TEST_CASE("Nosko parameters and extent survival") {
  // ev/m = 100 voxels.
  NoskoParams np;
  np.m = 2.0;
  np.ev_voxels = 200.0;
  np.beta = std::pow(0.75 * std::sqrt(std::numbers::pi) * np.m / np.ev_voxels, 2.0 / 3.0);
  CHECK(np.beta == doctest::Approx(0.05612).epsilon(1e-4));
  CHECK(extent_survival(0.0, np) == 1.0);
  NoskoParams fixed = np;
  fixed.beta = 0.05612;
  CHECK(extent_survival(100.0, fixed) == doctest::Approx(std::exp(-0.05612 * std::pow(100.0, 2.0 / 3.0))).epsilon(1e-14));
  CHECK(extent_survival(100.0, fixed) == doctest::Approx(0.2985).epsilon(1e-3));
  CHECK_THROWS_AS(extent_survival(-1.0, np), Error);

  // Mean of the extent distribution reproduces ev/m.
  // E[N] = integral of P(N >= k) dk, taken in x = k^(1/3) pieces.
  double mean = 0.0;
  for (double x = 0.0; x < 60.0; x += 1.0)
    mean += oracle::integrate([&](double s) { return extent_survival(s * s * s, np) * 3 * s * s; }, x, x + 1.0, 1e-12);
  CHECK(std::abs(mean - np.mean_extent()) < 1e-6 * np.mean_extent());

  Grid g({32, 32, 32}, {3, 3, 3});
  const auto R = resel_counts(g, Mask(g.size(), 1), {9, 9, 9});
  const auto t18 = FieldSpec::student_t(18);
  const double u = cdt_from_p(0.001, t18);
  const auto p = nosko_params(u, R, t18, g.size(), {3, 3, 3});
  CHECK(p.m == doctest::Approx(expected_ec(R, u, t18)).epsilon(1e-15));
  CHECK(p.ev_voxels / g.size() == doctest::Approx(t_tail(u, 18)).epsilon(1e-15));
  CHECK(p.beta == doctest::Approx(std::pow(0.75 * std::sqrt(std::numbers::pi) * p.m / p.ev_voxels, 2.0 / 3.0)).epsilon(1e-14));
  CHECK(p.resel_voxels == doctest::Approx(27.0));

  CHECK(cluster_fwe_p(0.0, p) == doctest::Approx(-std::expm1(-p.m)).epsilon(1e-15));
  CHECK(cluster_fwe_p(1.0, p) == doctest::Approx(1 - std::exp(-p.m * std::exp(-p.beta))).epsilon(1e-12));
  double prev = 2.0;
  for (double k = 0; k < 400; k += 7) {
    const double q = cluster_fwe_p(k, p);
    CHECK(q < prev);
    prev = q;
  }
  CHECK(cluster_fwe_p(50.0, u, R, t18, g.size(), {3, 3, 3}) == cluster_fwe_p(50.0, p));

  // Resel-unit and voxel-unit extents describe the same distribution.
  const double k_vox = 40.0;
  const double k_resel = k_vox / p.resel_voxels;
  const double beta_resel = p.beta * std::pow(p.resel_voxels, 2.0 / 3.0);
  CHECK(std::exp(-beta_resel * std::pow(k_resel, 2.0 / 3.0)) == doctest::Approx(extent_survival(k_vox, p)).epsilon(1e-13));

  try {
    nosko_params(40.0, R, FieldSpec::gaussian(), g.size(), {3, 3, 3});
    FAIL("expected out_of_regime");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::out_of_regime);
  }
}

TEST_CASE("field specs") {
  CHECK_THROWS_AS(FieldSpec::student_t(0.5).validate(), Error);
  CHECK_NOTHROW(FieldSpec::student_t(1).validate());
  CHECK_FALSE(FieldSpec::student_t(18).describe().empty());
}
