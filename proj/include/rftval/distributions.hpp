#pragma once

#include "rftval/field.hpp"

namespace rftval {

/// Upper tail P(Z > u) of the standard normal.
double normal_tail(double u);

/// Upper tail P(T > u) of Student's t with `df` degrees of freedom.
double t_tail(double u, double df);

/// Upper tail of the field's marginal distribution.
double marginal_tail(double u, const FieldSpec& field);

/// u such that marginal_tail(u) == p.
double marginal_upper_quantile(double p, const FieldSpec& field);

/// Standard normal quantile.
double normal_quantile(double p);

}  // namespace rftval
