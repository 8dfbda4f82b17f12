#pragma once

// Monte Carlo family-wise error experiments on synthetic null data.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rftval/cluster.hpp"
#include "rftval/design.hpp"
#include "rftval/lattice.hpp"

namespace rftval {

enum class TestKind { one_sample, two_sample };
enum class Inference { peak, cluster };
enum class Method { rft, permutation };
enum class SmoothnessSource { estimated, oracle };

const char* to_string(TestKind) noexcept;
const char* to_string(Inference) noexcept;
const char* to_string(Method) noexcept;
const char* to_string(SmoothnessSource) noexcept;
TestKind test_kind_from_string(const std::string&);
Inference inference_from_string(const std::string&);
Method method_from_string(const std::string&);
SmoothnessSource smoothness_source_from_string(const std::string&);

struct ExperimentConfig {
  // Lattice.
  Index3 dims{32, 32, 32};
  Vec3 voxel_size_mm{3.0, 3.0, 3.0};
  MaskShape mask_shape = MaskShape::full_box;
  // Synthetic subjects.
  std::size_t n_scans = 100;
  double tr = 2.0;
  double ar1 = 0.2;
  std::size_t drift_order = 4;
  // Sweep.
  std::size_t n_subjects_pool = 40;
  std::size_t group_size = 10;
  std::size_t n_realizations = 1000;
  std::vector<double> smoothing_levels_mm{4, 6, 8, 10, 12};
  std::vector<RegressorLabel> regressors{RegressorLabel::B1, RegressorLabel::B2, RegressorLabel::E1,
                                         RegressorLabel::E2};
  std::vector<double> cdt_p_levels{0.001};
  std::vector<TestKind> test_kinds{TestKind::two_sample};
  std::vector<Inference> inferences{Inference::peak, Inference::cluster};
  std::vector<Method> methods{Method::rft};
  double confound_amplitude = 0.0;
  double alpha = 0.05;
  std::uint64_t master_seed = 20160603;
  std::size_t n_permutations = 1000;
  Connectivity connectivity = Connectivity::edges;
  SmoothnessSource smoothness = SmoothnessSource::estimated;

  /// Throws config_error when the configuration cannot run.
  void validate() const;
  /// Canonical serialization; identical configs give identical strings.
  std::string canonical() const;
  /// FNV-1a of canonical(), as 16 hex digits.
  std::string hash() const;
};

struct FweCell {
  Method method = Method::rft;
  Inference inference = Inference::peak;
  TestKind test_kind = TestKind::two_sample;
  RegressorLabel regressor = RegressorLabel::B1;
  double smoothing_mm = 0.0;
  double cdt_p = 0.0;  // 0 for peak inference
  std::size_t n_realizations = 0;
  std::size_t rejections = 0;
  double empirical_fwe = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

/// Extent distribution of every suprathreshold cluster seen in one
/// (regressor, smoothing, test, threshold) cell, compared with the
/// per-realization parametric model.
struct ExtentDiagnostics {
  TestKind test_kind = TestKind::two_sample;
  RegressorLabel regressor = RegressorLabel::B1;
  double smoothing_mm = 0.0;
  double cdt_p = 0.0;
  std::size_t n_clusters = 0;
  double mean_extent = 0.0;           // observed
  double mean_model_extent = 0.0;     // cluster-weighted mean of ev/m
  double mean_clusters_per_map = 0.0;
  double mean_expected_clusters = 0.0;
  /// sup_k |F_empirical(k) - F_model(k)| over integer k, where F_model is the
  /// cluster-weighted mixture of 1 - P(N >= k) across realizations.
  double ks_distance = 0.0;
};

struct Provenance {
  std::uint64_t master_seed = 0;
  std::string config_hash;
  std::string software_version;
};

struct FweReport {
  std::vector<FweCell> cells;
  std::vector<ExtentDiagnostics> extent_diagnostics;
  Provenance provenance;
  double alpha = 0.05;
};

struct RunOptions {
  unsigned jobs = 1;
  bool collect_extents = false;
  /// Called after each finished pool cell with (done, total).
  std::function<void(std::size_t, std::size_t)> progress;
};

FweReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Wilson score interval, clamped to [0, 1].
std::pair<double, double> binomial_ci(std::size_t rejections, std::size_t n, double level = 0.95);

struct SummaryRow {
  FweCell cell;
  bool flagged = false;  // CI excludes alpha
};

struct SummaryTable {
  double alpha = 0.05;
  std::vector<Provenance> provenance;
  std::vector<SummaryRow> rows;
};

/// Long-format comparison table across reports that share alpha.
SummaryTable summarize(std::span<const FweReport> reports);

inline constexpr const char* report_csv_header =
    "method,inference,test_kind,regressor,smoothing_mm,cdt_p,empirical_fwe,ci_low,ci_high,n_realizations,"
    "rejections,flagged";

std::string report_csv(const SummaryTable& table);
std::string report_json(const SummaryTable& table);

/// KS distance between integer extents and the mixture model described on
/// ExtentDiagnostics. `betas[i]` pairs with `extents[i]`.
double extent_ks_distance(std::span<const double> extents, std::span<const double> betas);

}  // namespace rftval
