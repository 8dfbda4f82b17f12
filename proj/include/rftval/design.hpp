#pragma once

// Task regressors and first-level design matrices.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rftval {

enum class RegressorLabel { B1, B2, E1, E2, custom };

const char* to_string(RegressorLabel label) noexcept;
RegressorLabel regressor_label_from_string(const std::string& name);

struct Regressor {
  std::vector<double> samples;  // one value per scan
  RegressorLabel label = RegressorLabel::custom;
  double tr = 0.0;

  std::size_t n_scans() const noexcept { return samples.size(); }
  double variance() const;
};

/// Canonical double-gamma response (peak delay 6 s, undershoot delay 16 s,
/// unit dispersions, undershoot ratio 1/6) sampled every `dt` seconds over
/// [0, duration], scaled so the largest sample is 1.
std::vector<double> hrf_kernel(double dt, double duration = 32.0);

/// Continuous double-gamma value at time t (seconds), before normalization.
double double_gamma(double t);

/// On/off boxcar sampled at scan onsets, starting "on" at t = 0.
std::vector<double> block_stimulus(std::size_t n_scans, double tr, double on_s, double off_s);

enum class EventMode { fixed_isi, randomized };

struct EventSpec {
  EventMode mode = EventMode::fixed_isi;
  double duration_s = 2.0;
  double isi_s = 8.0;                         // onset to onset, fixed mode
  double isi_min_s = 3.0, isi_max_s = 9.0;    // randomized mode
  std::uint64_t seed = 0;
};

/// Event onsets (seconds) falling inside [0, n_scans * tr).
std::vector<double> event_onsets(std::size_t n_scans, double tr, const EventSpec& spec);

Regressor block_regressor(std::size_t n_scans, double tr, double on_s, double off_s);
Regressor event_regressor(std::size_t n_scans, double tr, const EventSpec& spec);

/// Default task regressors: B1 = 10 s on/off, B2 = 30 s on/off, E1 = 2 s
/// events every 8 s, E2 = 2 s events with onset spacing uniform on [3, 9] s.
/// `seed` only affects E2.
Regressor default_regressor(RegressorLabel label, std::size_t n_scans, double tr, std::uint64_t seed);

struct DesignMatrix {
  Eigen::MatrixXd columns;          // scans x regressors
  std::vector<std::string> labels;  // one per column
  Eigen::VectorXd contrast;         // one weight per column

  Eigen::Index n_scans() const noexcept { return columns.rows(); }
  Eigen::Index n_columns() const noexcept { return columns.cols(); }
  double condition_number() const;
};

/// Columns: task, intercept, then `drift_order` discrete-cosine drift terms.
/// The contrast selects the task column.
DesignMatrix build_design(const Regressor& task, std::size_t drift_order);

void write_design_csv(const DesignMatrix& design, const std::filesystem::path& path);

}  // namespace rftval
