#pragma once

#include <string>

namespace rftval {

enum class FieldKind { gaussian, student_t };

/// Marginal distribution of a statistic field. Only D = 3 is supported.
struct FieldSpec {
  FieldKind kind = FieldKind::student_t;
  double df = 0.0;  // required for student_t
  int dimension = 3;

  static FieldSpec gaussian() { return {FieldKind::gaussian, 0.0, 3}; }
  static FieldSpec student_t(double df) { return {FieldKind::student_t, df, 3}; }

  void validate() const;
  std::string describe() const;
};

}  // namespace rftval
