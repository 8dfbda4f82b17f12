#include "rftval/design.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "rftval/error.hpp"
#include "rftval/seed.hpp"

namespace rftval {
namespace {

// Stimulus trains are built on a finer time grid than the scans so that
// event onsets between scan times are represented.
constexpr std::size_t microtime_bins = 16;

double gamma_pdf(double t, double shape) {
  if (t <= 0.0) return 0.0;
  return std::exp((shape - 1.0) * std::log(t) - t - std::lgamma(shape));
}

void mean_center(std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double& x : v) x -= mean;
}

// Causal convolution of a microtime stimulus with the response, sampled at
// scan onsets. Scaled by the microtime step so the result approximates the
// continuous convolution integral.
std::vector<double> convolve_to_scans(const std::vector<double>& stimulus, std::size_t n_scans, double tr) {
  const double dt = tr / static_cast<double>(microtime_bins);
  const auto kernel = hrf_kernel(dt);
  std::vector<double> out(n_scans, 0.0);
  for (std::size_t s = 0; s < n_scans; ++s) {
    const std::size_t t = s * microtime_bins;
    double acc = 0.0;
    const std::size_t k_max = std::min(kernel.size() - 1, t);
    for (std::size_t k = 0; k <= k_max; ++k) acc += kernel[k] * stimulus[t - k];
    out[s] = acc * dt;
  }
  return out;
}

Regressor finish(std::vector<double> stimulus, std::size_t n_scans, double tr, RegressorLabel label) {
  Regressor r{convolve_to_scans(stimulus, n_scans, tr), label, tr};
  mean_center(r.samples);
  if (!(r.variance() > 0.0)) fail(ErrorKind::invalid_argument, "regressor is constant over the scan window");
  return r;
}

}  // namespace

const char* to_string(RegressorLabel label) noexcept {
  switch (label) {
    case RegressorLabel::B1: return "B1";
    case RegressorLabel::B2: return "B2";
    case RegressorLabel::E1: return "E1";
    case RegressorLabel::E2: return "E2";
    case RegressorLabel::custom: return "custom";
  }
  return "custom";
}

RegressorLabel regressor_label_from_string(const std::string& name) {
  for (auto label : {RegressorLabel::B1, RegressorLabel::B2, RegressorLabel::E1, RegressorLabel::E2,
                     RegressorLabel::custom})
    if (name == to_string(label)) return label;
  fail(ErrorKind::invalid_argument, "unknown regressor label '" + name + "'");
}

double Regressor::variance() const {
  if (samples.size() < 2) return 0.0;
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(samples.size() - 1);
}

double double_gamma(double t) { return gamma_pdf(t, 6.0) - gamma_pdf(t, 16.0) / 6.0; }

std::vector<double> hrf_kernel(double dt, double duration) {
  require(std::isfinite(dt) && dt > 0.0, "hrf sampling interval must be > 0 s");
  require(duration >= 16.0, "hrf duration must be >= 16 s");
  const auto n = static_cast<std::size_t>(std::floor(duration / dt)) + 1;
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = double_gamma(static_cast<double>(i) * dt);
  const double peak = *std::max_element(h.begin(), h.end());
  for (double& v : h) v /= peak;
  return h;
}

std::vector<double> block_stimulus(std::size_t n_scans, double tr, double on_s, double off_s) {
  require(tr > 0.0, "tr must be > 0 s");
  require(on_s > 0.0 && off_s > 0.0, "block on/off durations must be > 0 s");
  if (on_s + off_s < tr) fail(ErrorKind::invalid_argument, "block period is shorter than tr");
  std::vector<double> out(n_scans);
  for (std::size_t s = 0; s < n_scans; ++s)
    out[s] = std::fmod(static_cast<double>(s) * tr, on_s + off_s) < on_s ? 1.0 : 0.0;
  return out;
}

Regressor block_regressor(std::size_t n_scans, double tr, double on_s, double off_s) {
  (void)block_stimulus(1, tr, on_s, off_s);  // validates arguments
  require(n_scans >= 2, "a regressor needs at least 2 scans");
  const double dt = tr / static_cast<double>(microtime_bins);
  std::vector<double> stimulus(n_scans * microtime_bins);
  for (std::size_t i = 0; i < stimulus.size(); ++i)
    stimulus[i] = std::fmod(static_cast<double>(i) * dt, on_s + off_s) < on_s ? 1.0 : 0.0;
  return finish(std::move(stimulus), n_scans, tr, RegressorLabel::custom);
}

std::vector<double> event_onsets(std::size_t n_scans, double tr, const EventSpec& spec) {
  const double window = static_cast<double>(n_scans) * tr;
  std::vector<double> onsets;
  if (spec.mode == EventMode::fixed_isi) {
    require(spec.isi_s > 0.0, "isi must be > 0 s");
    require(spec.duration_s > 0.0 && spec.duration_s < spec.isi_s, "event duration must be in (0, isi)");
    for (std::size_t k = 0;; ++k) {
      const double t = static_cast<double>(k) * spec.isi_s;
      if (t >= window) break;
      onsets.push_back(t);
    }
  } else {
    require(spec.isi_min_s > 0.0 && spec.isi_max_s >= spec.isi_min_s, "isi range must be positive and ordered");
    require(spec.duration_s > 0.0 && spec.duration_s < spec.isi_min_s, "event duration must be in (0, isi_min)");
    Engine engine(spec.seed);
    std::uniform_real_distribution<double> isi(spec.isi_min_s, spec.isi_max_s);
    for (double t = 0.0; t < window; t += isi(engine)) onsets.push_back(t);
  }
  return onsets;
}

Regressor event_regressor(std::size_t n_scans, double tr, const EventSpec& spec) {
  require(tr > 0.0, "tr must be > 0 s");
  require(n_scans >= 2, "a regressor needs at least 2 scans");
  const auto onsets = event_onsets(n_scans, tr, spec);
  const double dt = tr / static_cast<double>(microtime_bins);
  std::vector<double> stimulus(n_scans * microtime_bins, 0.0);
  for (double onset : onsets) {
    const auto first = static_cast<std::size_t>(std::ceil(onset / dt - 1e-9));
    const auto last = static_cast<std::size_t>(std::ceil((onset + spec.duration_s) / dt - 1e-9));
    for (std::size_t i = first; i < std::min(last, stimulus.size()); ++i) stimulus[i] = 1.0;
  }
  return finish(std::move(stimulus), n_scans, tr, RegressorLabel::custom);
}

Regressor default_regressor(RegressorLabel label, std::size_t n_scans, double tr, std::uint64_t seed) {
  Regressor r;
  switch (label) {
    case RegressorLabel::B1: r = block_regressor(n_scans, tr, 10.0, 10.0); break;
    case RegressorLabel::B2: r = block_regressor(n_scans, tr, 30.0, 30.0); break;
    case RegressorLabel::E1: r = event_regressor(n_scans, tr, EventSpec{EventMode::fixed_isi, 2.0, 8.0}); break;
    case RegressorLabel::E2: {
      EventSpec spec;
      spec.mode = EventMode::randomized;
      spec.seed = mix_seed(seed, {stream::design});
      r = event_regressor(n_scans, tr, spec);
      break;
    }
    case RegressorLabel::custom: fail(ErrorKind::invalid_argument, "custom regressors have no default");
  }
  r.label = label;
  return r;
}

double DesignMatrix::condition_number() const {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(columns);
  const auto& sv = svd.singularValues();
  return sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
}

DesignMatrix build_design(const Regressor& task, std::size_t drift_order) {
  const auto n = static_cast<Eigen::Index>(task.n_scans());
  require(n >= 2, "a design needs at least 2 scans");
  const auto cols = static_cast<Eigen::Index>(2 + drift_order);
  if (cols > n) fail(ErrorKind::degenerate_design, "more design columns than scans");

  DesignMatrix d;
  d.columns.resize(n, cols);
  d.labels = {task.label == RegressorLabel::custom ? "task" : to_string(task.label), "intercept"};
  for (Eigen::Index t = 0; t < n; ++t) {
    d.columns(t, 0) = task.samples[static_cast<std::size_t>(t)];
    d.columns(t, 1) = 1.0;
  }
  for (std::size_t k = 1; k <= drift_order; ++k) {
    const auto c = static_cast<Eigen::Index>(1 + k);
    for (Eigen::Index t = 0; t < n; ++t)
      d.columns(t, c) = std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(t) + 0.5) /
                                 static_cast<double>(n));
    d.labels.push_back("dct" + std::to_string(k));
  }
  d.contrast = Eigen::VectorXd::Zero(cols);
  d.contrast(0) = 1.0;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.columns);
  if (qr.rank() < cols) fail(ErrorKind::degenerate_design, "design matrix is rank deficient");
  return d;
}

void write_design_csv(const DesignMatrix& design, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io_error, "cannot open " + path.string());
  out.precision(17);
  for (std::size_t c = 0; c < design.labels.size(); ++c) out << (c ? "," : "") << design.labels[c];
  out << '\n';
  for (Eigen::Index t = 0; t < design.n_scans(); ++t) {
    for (Eigen::Index c = 0; c < design.n_columns(); ++c) out << (c ? "," : "") << design.columns(t, c);
    out << '\n';
  }
  if (!out) fail(ErrorKind::io_error, "write failed: " + path.string());
}

}  // namespace rftval
