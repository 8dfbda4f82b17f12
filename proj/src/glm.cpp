#include "rftval/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rftval/error.hpp"

namespace rftval {
namespace {

[[noreturn]] void degenerate_voxel(const Grid& grid, std::size_t v) {
  const auto c = grid.coords(v);
  fail(ErrorKind::degenerate_variance, "zero cross-subject variance at voxel (" + std::to_string(c[0]) + ", " +
                                           std::to_string(c[1]) + ", " + std::to_string(c[2]) + ")");
}

void check_subjects(const Grid& grid, const Mask& mask, std::span<const double* const> subjects) {
  require(mask.size() == grid.size(), "mask size does not match grid");
  for (const double* s : subjects) require(s != nullptr, "null subject map");
}

std::vector<const double*> pointers(std::span<const ContrastMap> maps, const Grid& grid) {
  std::vector<const double*> out;
  out.reserve(maps.size());
  for (const auto& m : maps) {
    require(m.grid == grid, "all contrast maps must share one grid");
    require(m.contrast_estimate.size() == grid.size(), "contrast map size does not match grid");
    out.push_back(m.contrast_estimate.data());
  }
  return out;
}

}  // namespace

double StatMap::max_t() const {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t_values.size(); ++i)
    if (mask[i]) best = std::max(best, t_values[i]);
  return best;
}

void StatMap::populate_smoothness(const std::optional<Vec3>& fwhm_mm) {
  if (fwhm_mm) {
    smoothness = SmoothnessEstimate::from_mm(grid, *fwhm_mm, 0);
  } else {
    if (n_residual_fields < 2)
      fail(ErrorKind::incomplete_context, "no residual fields to estimate smoothness from");
    smoothness = estimate_fwhm(grid, mask, residuals, n_residual_fields);
  }
  resels = resel_counts(grid, mask, smoothness->fwhm_mm);
}

FirstLevelModel::FirstLevelModel(const DesignMatrix& design) : design_(design) {
  const auto n = design.n_scans();
  const auto p = design.n_columns();
  require(design.contrast.size() == p, "contrast length must equal the column count");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.columns);
  rank_ = qr.rank();
  if (rank_ < p) fail(ErrorKind::degenerate_design, "design matrix is rank deficient");
  if (n <= rank_) fail(ErrorKind::insufficient_data, "need more scans than design rank");
  pinv_ = qr.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::VectorXd w = pinv_.transpose() * design.contrast;
  weights_.assign(w.data(), w.data() + w.size());
}

Eigen::MatrixXd FirstLevelModel::betas(const TimeSeriesDataset& ds) const {
  require(static_cast<Eigen::Index>(ds.n_scans()) == design_.n_scans(), "design rows must equal the scan count");
  const auto p = design_.n_columns();
  const std::size_t nv = ds.grid().size();
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(p, static_cast<Eigen::Index>(nv));
  for (std::size_t t = 0; t < ds.n_scans(); ++t) {
    const auto y = ds.scan(t);
    for (Eigen::Index k = 0; k < p; ++k) {
      const double w = pinv_(k, static_cast<Eigen::Index>(t));
      double* row = &beta(k, 0);
      const auto stride = beta.rows();
      for (std::size_t v = 0; v < nv; ++v) row[v * static_cast<std::size_t>(stride)] += w * y[v];
    }
  }
  return beta;
}

std::vector<double> FirstLevelModel::contrast_estimate(const TimeSeriesDataset& ds) const {
  require(static_cast<Eigen::Index>(ds.n_scans()) == design_.n_scans(), "design rows must equal the scan count");
  std::vector<double> out(ds.grid().size(), 0.0);
  for (std::size_t t = 0; t < ds.n_scans(); ++t) {
    const double w = weights_[t];
    const auto y = ds.scan(t);
    for (std::size_t v = 0; v < out.size(); ++v) out[v] += w * y[v];
  }
  return out;
}

ContrastMap FirstLevelModel::fit(const TimeSeriesDataset& ds, bool keep_residuals) const {
  ContrastMap out{ds.grid(), ds.mask(), contrast_estimate(ds), {}, ds.n_scans(), df()};
  if (!keep_residuals) return out;

  const Eigen::MatrixXd beta = betas(ds);
  const std::size_t nv = ds.grid().size();
  const std::size_t n = ds.n_scans();
  out.residuals.assign(n * nv, 0.0);
  std::vector<double> y_ss(nv, 0.0), e_ss(nv, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const auto y = ds.scan(t);
    double* e = out.residuals.data() + t * nv;
    for (std::size_t v = 0; v < nv; ++v) {
      double fitted = 0.0;
      for (Eigen::Index k = 0; k < beta.rows(); ++k)
        fitted += design_.columns(static_cast<Eigen::Index>(t), k) * beta(k, static_cast<Eigen::Index>(v));
      e[v] = y[v] - fitted;
      y_ss[v] += y[v] * y[v];
      e_ss[v] += e[v] * e[v];
    }
  }
  // Residuals at rounding level of an exact fit are set to zero rather than
  // blown up by the standardization.
  for (std::size_t v = 0; v < nv; ++v)
    if (e_ss[v] <= 1e-24 * y_ss[v])
      for (std::size_t t = 0; t < n; ++t) out.residuals[t * nv + v] = 0.0;
  standardize_residuals(out.residuals, n, ds.mask());
  return out;
}

ContrastMap fit_first_level(const TimeSeriesDataset& ds, const DesignMatrix& design) {
  return FirstLevelModel(design).fit(ds);
}

void standardize_residuals(std::span<double> fields, std::size_t n_fields, const Mask& mask) {
  require(n_fields > 0 && fields.size() == n_fields * mask.size(), "residual storage does not match the mask");
  const std::size_t nv = mask.size();
  for (std::size_t v = 0; v < nv; ++v) {
    if (!mask[v]) {
      for (std::size_t f = 0; f < n_fields; ++f) fields[f * nv + v] = 0.0;
      continue;
    }
    double ss = 0.0;
    for (std::size_t f = 0; f < n_fields; ++f) ss += fields[f * nv + v] * fields[f * nv + v];
    if (ss == 0.0) continue;
    const double scale = 1.0 / std::sqrt(ss / static_cast<double>(n_fields));
    for (std::size_t f = 0; f < n_fields; ++f) fields[f * nv + v] *= scale;
  }
}

StatMap one_sample_t(const Grid& grid, const Mask& mask, std::span<const double* const> subjects,
                     bool keep_residuals) {
  check_subjects(grid, mask, subjects);
  const std::size_t n = subjects.size();
  if (n < 2) fail(ErrorKind::insufficient_data, "one-sample t needs at least 2 subjects");
  const std::size_t nv = grid.size();
  StatMap out{grid, mask, std::vector<double>(nv, 0.0), FieldSpec::student_t(static_cast<double>(n - 1)), {}, {}, {}, 0};
  if (keep_residuals) {
    out.residuals.assign(n * nv, 0.0);
    out.n_residual_fields = n;
  }
  const double dn = static_cast<double>(n);
  for (std::size_t v = 0; v < nv; ++v) {
    if (!mask[v]) continue;
    double sum = 0.0;
    for (const double* s : subjects) sum += s[v];
    const double mean = sum / dn;
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = subjects[j][v] - mean;
      ss += d * d;
      if (keep_residuals) out.residuals[j * nv + v] = d;
    }
    if (!(ss > 0.0)) degenerate_voxel(grid, v);
    const double sd = std::sqrt(ss / (dn - 1.0));
    out.t_values[v] = mean / (sd / std::sqrt(dn));
  }
  if (keep_residuals) standardize_residuals(out.residuals, n, mask);
  return out;
}

StatMap two_sample_t(const Grid& grid, const Mask& mask, std::span<const double* const> group_a,
                     std::span<const double* const> group_b, bool keep_residuals) {
  check_subjects(grid, mask, group_a);
  check_subjects(grid, mask, group_b);
  const std::size_t na = group_a.size(), nb = group_b.size();
  if (na < 2 || nb < 2) fail(ErrorKind::insufficient_data, "two-sample t needs at least 2 subjects per group");
  const std::size_t nv = grid.size();
  const double df = static_cast<double>(na + nb - 2);
  StatMap out{grid, mask, std::vector<double>(nv, 0.0), FieldSpec::student_t(df), {}, {}, {}, 0};
  if (keep_residuals) {
    out.residuals.assign((na + nb) * nv, 0.0);
    out.n_residual_fields = na + nb;
  }
  const double scale = 1.0 / static_cast<double>(na) + 1.0 / static_cast<double>(nb);
  auto group_stats = [&](std::span<const double* const> g, std::size_t v, std::size_t first_field) {
    double sum = 0.0;
    for (const double* s : g) sum += s[v];
    const double mean = sum / static_cast<double>(g.size());
    double ss = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double d = g[j][v] - mean;
      ss += d * d;
      if (keep_residuals) out.residuals[(first_field + j) * nv + v] = d;
    }
    return std::pair{mean, ss};
  };
  for (std::size_t v = 0; v < nv; ++v) {
    if (!mask[v]) continue;
    const auto [ma, ssa] = group_stats(group_a, v, 0);
    const auto [mb, ssb] = group_stats(group_b, v, na);
    const double pooled = (ssa + ssb) / df;
    if (!(pooled > 0.0)) degenerate_voxel(grid, v);
    out.t_values[v] = (ma - mb) / std::sqrt(pooled * scale);
  }
  if (keep_residuals) standardize_residuals(out.residuals, na + nb, mask);
  return out;
}

StatMap one_sample_t(std::span<const ContrastMap> maps) {
  if (maps.size() < 2) fail(ErrorKind::insufficient_data, "one-sample t needs at least 2 subjects");
  const auto ptrs = pointers(maps, maps.front().grid);
  return one_sample_t(maps.front().grid, maps.front().mask, ptrs);
}

StatMap two_sample_t(std::span<const ContrastMap> group_a, std::span<const ContrastMap> group_b) {
  if (group_a.size() < 2 || group_b.size() < 2)
    fail(ErrorKind::insufficient_data, "two-sample t needs at least 2 subjects per group");
  const Grid& grid = group_a.front().grid;
  const auto a = pointers(group_a, grid);
  const auto b = pointers(group_b, grid);
  return two_sample_t(grid, group_a.front().mask, a, b);
}

}  // namespace rftval
