#pragma once

#include <string>

#include "rftval/harness.hpp"

namespace rftval {

/// Empirical FWE against smoothing for one regressor: one curve per
/// (method, inference, test, threshold) with CI whiskers and a line at alpha.
std::string fwe_svg(const SummaryTable& table, RegressorLabel regressor);

}  // namespace rftval
