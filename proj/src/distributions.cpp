#include "rftval/distributions.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numbers>

#include "rftval/error.hpp"

namespace rftval {

void FieldSpec::validate() const {
  require(dimension == 3, "only 3D search regions are supported");
  if (kind == FieldKind::student_t) require(std::isfinite(df) && df >= 1.0, "t-field df must be >= 1");
}

std::string FieldSpec::describe() const {
  if (kind == FieldKind::gaussian) return "gaussian";
  return "student_t(" + std::to_string(df) + ")";
}

double normal_tail(double u) { return 0.5 * std::erfc(u / std::numbers::sqrt2); }

double t_tail(double u, double df) {
  require(std::isfinite(df) && df > 0.0, "t df must be > 0");
  if (std::isinf(u)) return u > 0 ? 0.0 : 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>(df), u));
}

double marginal_tail(double u, const FieldSpec& field) {
  field.validate();
  return field.kind == FieldKind::gaussian ? normal_tail(u) : t_tail(u, field.df);
}

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double marginal_upper_quantile(double p, const FieldSpec& field) {
  field.validate();
  require(p > 0.0 && p < 1.0, "tail probability must lie in (0, 1)");
  if (field.kind == FieldKind::gaussian)
    return boost::math::quantile(boost::math::complement(boost::math::normal_distribution<double>(), p));
  return boost::math::quantile(boost::math::complement(boost::math::students_t_distribution<double>(field.df), p));
}

}  // namespace rftval
