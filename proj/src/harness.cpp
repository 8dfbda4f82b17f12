#include "rftval/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "rftval/distributions.hpp"
#include "rftval/error.hpp"
#include "rftval/glm.hpp"
#include "rftval/parallel.hpp"
#include "rftval/permute.hpp"
#include "rftval/rft.hpp"
#include "rftval/seed.hpp"

#ifndef RFTVAL_VERSION
#define RFTVAL_VERSION "0.0.0"
#endif

namespace rftval {
namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& name, const std::array<Enum, N>& values, const char* what) {
  for (Enum v : values)
    if (name == to_string(v)) return v;
  fail(ErrorKind::config_error, std::string("unknown ") + what + " '" + name + "'");
}

std::string fmt_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// One statistical decision evaluated in every realization of a pool cell.
struct Decision {
  Method method;
  Inference inference;
  double cdt_p;  // 0 for peak
};

struct ClusterSample {
  double beta = 0.0;
  double m = 0.0;
  double mean_extent_model = 0.0;
  std::vector<std::size_t> extents;
};

struct RealizationResult {
  std::vector<std::uint8_t> events;         // one per decision
  std::vector<ClusterSample> cluster_samples;  // one per cdt level when collecting
};

std::vector<std::size_t> draw_subjects(std::size_t pool, std::size_t count, std::uint64_t seed) {
  Engine engine(seed);
  std::vector<std::size_t> order(pool);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool - 1);
    std::swap(order[i], order[pick(engine)]);
  }
  order.resize(count);
  return order;
}

}  // namespace

const char* to_string(TestKind k) noexcept { return k == TestKind::one_sample ? "one_sample" : "two_sample"; }
const char* to_string(Inference i) noexcept { return i == Inference::peak ? "peak" : "cluster"; }
const char* to_string(Method m) noexcept { return m == Method::rft ? "rft" : "permutation"; }
const char* to_string(SmoothnessSource s) noexcept { return s == SmoothnessSource::estimated ? "estimated" : "oracle"; }

TestKind test_kind_from_string(const std::string& s) {
  return parse_enum(s, std::array{TestKind::one_sample, TestKind::two_sample}, "test kind");
}
Inference inference_from_string(const std::string& s) {
  return parse_enum(s, std::array{Inference::peak, Inference::cluster}, "inference");
}
Method method_from_string(const std::string& s) {
  return parse_enum(s, std::array{Method::rft, Method::permutation}, "method");
}
SmoothnessSource smoothness_source_from_string(const std::string& s) {
  return parse_enum(s, std::array{SmoothnessSource::estimated, SmoothnessSource::oracle}, "smoothness source");
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::config_error, what);
  };
  for (int a = 0; a < 3; ++a) {
    check(dims[a] >= 1, "grid.dims entries must be >= 1");
    check(std::isfinite(voxel_size_mm[a]) && voxel_size_mm[a] > 0.0, "grid.voxel_size entries must be > 0");
  }
  check(n_scans >= drift_order + 3, "data.n_scans must exceed the design column count");
  check(std::isfinite(tr) && tr > 0.0, "data.tr must be > 0");
  check(ar1 >= 0.0 && ar1 < 1.0, "data.ar1 must lie in [0, 1)");
  check(group_size >= 2, "experiment.group_size must be >= 2");
  check(n_realizations >= 1, "experiment.n_realizations must be >= 1");
  check(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  check(n_permutations >= 1, "experiment.n_permutations must be >= 1");
  check(!smoothing_levels_mm.empty(), "experiment.smoothing_levels_mm must not be empty");
  check(!regressors.empty(), "experiment.regressors must not be empty");
  check(!test_kinds.empty(), "experiment.test_kinds must not be empty");
  check(!inferences.empty(), "experiment.inferences must not be empty");
  check(!methods.empty(), "experiment.methods must not be empty");
  for (double s : smoothing_levels_mm) {
    check(std::isfinite(s) && s >= 0.0, "smoothing levels must be >= 0 mm");
    check(smoothness == SmoothnessSource::estimated || s > 0.0, "oracle smoothness needs smoothing > 0");
  }
  for (auto r : regressors) check(r != RegressorLabel::custom, "regressors must be B1, B2, E1 or E2");
  if (std::find(inferences.begin(), inferences.end(), Inference::cluster) != inferences.end()) {
    check(!cdt_p_levels.empty(), "cluster inference needs experiment.cdt_p_levels");
    for (double p : cdt_p_levels) check(p > 0.0 && p <= 0.5, "cdt p levels must lie in (0, 0.5]");
  }
  for (auto k : test_kinds) {
    if (k == TestKind::two_sample)
      check(2 * group_size <= n_subjects_pool, "two-sample draws need 2 * group_size <= n_subjects_pool");
    else
      check(group_size <= n_subjects_pool, "one-sample draws need group_size <= n_subjects_pool");
  }
}

std::string ExperimentConfig::canonical() const {
  nlohmann::ordered_json j;
  j["dims"] = dims;
  j["voxel_size_mm"] = voxel_size_mm;
  j["mask"] = mask_shape == MaskShape::full_box ? "full_box" : "centered_ellipsoid";
  j["n_scans"] = n_scans;
  j["tr"] = tr;
  j["ar1"] = ar1;
  j["drift_order"] = drift_order;
  j["n_subjects_pool"] = n_subjects_pool;
  j["group_size"] = group_size;
  j["n_realizations"] = n_realizations;
  j["smoothing_levels_mm"] = smoothing_levels_mm;
  std::vector<std::string> regs;
  for (auto r : regressors) regs.emplace_back(to_string(r));
  j["regressors"] = regs;
  j["cdt_p_levels"] = cdt_p_levels;
  std::vector<std::string> kinds, infs, meths;
  for (auto k : test_kinds) kinds.emplace_back(to_string(k));
  for (auto i : inferences) infs.emplace_back(to_string(i));
  for (auto m : methods) meths.emplace_back(to_string(m));
  j["test_kinds"] = kinds;
  j["inferences"] = infs;
  j["methods"] = meths;
  j["confound_amplitude"] = confound_amplitude;
  j["alpha"] = alpha;
  j["master_seed"] = master_seed;
  j["n_permutations"] = n_permutations;
  j["connectivity"] = to_int(connectivity);
  j["smoothness"] = to_string(smoothness);
  return j.dump();
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::pair<double, double> binomial_ci(std::size_t rejections, std::size_t n, double level) {
  require(n >= 1, "binomial interval needs n >= 1");
  require(rejections <= n, "rejections cannot exceed n");
  require(level > 0.0 && level < 1.0, "confidence level must lie in (0, 1)");
  const double z = normal_quantile(0.5 + 0.5 * level);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(rejections) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  double lo = rejections == 0 ? 0.0 : std::clamp(centre - half, 0.0, 1.0);
  double hi = rejections == n ? 1.0 : std::clamp(centre + half, 0.0, 1.0);
  return {std::min(lo, p), std::max(hi, p)};
}

double extent_ks_distance(std::span<const double> extents, std::span<const double> betas) {
  require(extents.size() == betas.size(), "one beta per extent is required");
  if (extents.empty()) return 0.0;
  std::map<double, std::size_t> beta_groups;
  std::vector<double> sorted(extents.begin(), extents.end());
  for (double b : betas) ++beta_groups[b];
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const auto k_max = static_cast<std::size_t>(sorted.back());
  double d = 0.0;
  std::size_t below = 0;
  for (std::size_t k = 1; k <= k_max; ++k) {
    while (below < sorted.size() && sorted[below] <= static_cast<double>(k)) ++below;
    const double f_emp = static_cast<double>(below) / n;
    const double kk = std::pow(static_cast<double>(k), 2.0 / 3.0);
    double f_model = 0.0;
    for (const auto& [beta, count] : beta_groups) f_model += static_cast<double>(count) * -std::expm1(-beta * kk);
    f_model /= n;
    d = std::max(d, std::abs(f_emp - f_model));
  }
  return d;
}

FweReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const MaskedGrid g = make_grid(config.dims, config.voxel_size_mm, config.mask_shape);
  const std::size_t n_mask = mask_count(g.mask);
  const std::size_t nv = g.grid.size();

  std::vector<FirstLevelModel> models;
  std::vector<Regressor> regressors;
  for (auto label : config.regressors) {
    regressors.push_back(default_regressor(label, config.n_scans, config.tr, config.master_seed));
    models.emplace_back(build_design(regressors.back(), config.drift_order));
  }
  const Volume profile(g.grid, g.mask, std::vector<double>(nv, 1.0));

  auto has = [](const auto& list, auto v) { return std::find(list.begin(), list.end(), v) != list.end(); };
  std::vector<Decision> decisions;
  for (auto m : config.methods)
    for (auto inf : config.inferences) {
      if (inf == Inference::peak) decisions.push_back({m, inf, 0.0});
      else
        for (double p : config.cdt_p_levels) decisions.push_back({m, inf, p});
    }
  const bool need_rft = has(config.methods, Method::rft);
  const bool need_perm = has(config.methods, Method::permutation);
  const bool rft_cluster = need_rft && has(config.inferences, Inference::cluster);
  const bool collect = options.collect_extents && rft_cluster;

  FweReport report;
  report.alpha = config.alpha;
  report.provenance = {config.master_seed, config.hash(), RFTVAL_VERSION};

  const std::size_t n_pool_cells = config.smoothing_levels_mm.size() * config.regressors.size();
  std::size_t pool_cells_done = 0;
  const std::size_t n_pool = config.n_subjects_pool;

  for (double smoothing : config.smoothing_levels_mm) {
    // Subject pool: one synthetic dataset per subject, fitted with every
    // regressor. The noise does not depend on the smoothing level or the
    // regressor, so all cells see the same underlying subjects.
    std::vector<std::vector<std::vector<double>>> pool(config.regressors.size(),
                                                       std::vector<std::vector<double>>(n_pool));
    parallel_for(n_pool, options.jobs, [&](std::size_t j) {
      const TimeSeriesDataset ds =
          synth_subject_data(g.grid, g.mask, config.n_scans, config.tr, {smoothing, smoothing, smoothing}, config.ar1,
                             mix_seed(config.master_seed, {stream::noise, j}));
      for (std::size_t r = 0; r < regressors.size(); ++r) {
        if (config.confound_amplitude != 0.0) {
          const TimeSeriesDataset confounded =
              inject_shared_signal(ds, regressors[r].samples, config.confound_amplitude, profile);
          pool[r][j] = models[r].contrast_estimate(confounded);
        } else {
          pool[r][j] = models[r].contrast_estimate(ds);
        }
      }
    });

    for (std::size_t ri = 0; ri < config.regressors.size(); ++ri) {
      for (auto kind : config.test_kinds) {
        const std::size_t g_size = config.group_size;
        const std::size_t n_draw = kind == TestKind::two_sample ? 2 * g_size : g_size;
        std::vector<RealizationResult> results(config.n_realizations);

        parallel_for(config.n_realizations, options.jobs, [&](std::size_t rz) {
          const auto idx = draw_subjects(
              n_pool, n_draw, mix_seed(config.master_seed, {stream::group_draw, static_cast<std::uint64_t>(kind), rz}));
          std::vector<const double*> a, b;
          for (std::size_t i = 0; i < g_size; ++i) a.push_back(pool[ri][idx[i]].data());
          if (kind == TestKind::two_sample)
            for (std::size_t i = g_size; i < n_draw; ++i) b.push_back(pool[ri][idx[i]].data());

          RealizationResult& out = results[rz];
          out.events.assign(decisions.size(), 0);
          if (collect) out.cluster_samples.resize(config.cdt_p_levels.size());

          std::optional<StatMap> map;
          try {
            if (need_rft) {
              map = kind == TestKind::two_sample ? two_sample_t(g.grid, g.mask, a, b, true)
                                                 : one_sample_t(g.grid, g.mask, a, true);
              if (config.smoothness == SmoothnessSource::oracle) map->populate_smoothness(Vec3{smoothing, smoothing, smoothing});
              else map->populate_smoothness();
            }
            const FieldSpec field =
                FieldSpec::student_t(static_cast<double>(kind == TestKind::two_sample ? n_draw - 2 : n_draw - 1));

            std::optional<NullSet> nulls;
            if (need_perm) {
              NullRequest request;
              request.max_t = has(config.inferences, Inference::peak);
              if (has(config.inferences, Inference::cluster))
                for (double p : config.cdt_p_levels) request.extent_thresholds.push_back(cdt_from_p(p, field));
              PermutationOptions po;
              po.n_permutations = config.n_permutations;
              po.seed = mix_seed(config.master_seed, {stream::permutation, static_cast<std::uint64_t>(kind), rz});
              po.connectivity = config.connectivity;
              nulls = permutation_nulls(g.grid, g.mask, a, b, request, po);
            }

            for (std::size_t d = 0; d < decisions.size(); ++d) {
              const Decision& dec = decisions[d];
              bool event = false;
              if (dec.method == Method::rft) {
                if (dec.inference == Inference::peak) {
                  event = peak_fwe_p(map->max_t(), *map->resels, field) < config.alpha;
                } else {
                  const double u = cdt_from_p(dec.cdt_p, field);
                  const Labeling lab = label_clusters(*map, u, config.connectivity);
                  std::optional<NoskoParams> np;
                  try {
                    np = nosko_params(u, *map->resels, field, n_mask, map->smoothness->fwhm_voxels);
                  } catch (const Error& e) {
                    if (e.kind() != ErrorKind::out_of_regime || !lab.components.empty()) throw;
                  }
                  if (!lab.components.empty())
                    event = cluster_fwe_p(static_cast<double>(lab.max_extent()), *np) < config.alpha;
                  if (collect && np) {
                    const auto ci = static_cast<std::size_t>(
                        std::find(config.cdt_p_levels.begin(), config.cdt_p_levels.end(), dec.cdt_p) -
                        config.cdt_p_levels.begin());
                    ClusterSample& cs = out.cluster_samples[ci];
                    cs.beta = np->beta;
                    cs.m = np->m;
                    cs.mean_extent_model = np->mean_extent();
                    for (const auto& c : lab.components) cs.extents.push_back(c.extent);
                  }
                }
              } else if (dec.inference == Inference::peak) {
                event = nonparam_p(nulls->max_t->observed(), *nulls->max_t) <= config.alpha;
              } else {
                const auto ci = static_cast<std::size_t>(
                    std::find(config.cdt_p_levels.begin(), config.cdt_p_levels.end(), dec.cdt_p) -
                    config.cdt_p_levels.begin());
                const MaxStatNull& null = nulls->max_extent[ci];
                event = nonparam_p(null.observed(), null) <= config.alpha;
              }
              out.events[d] = event ? 1 : 0;
            }
          } catch (const Error& e) {
            throw Error(e.kind(), std::string(e.what()) + " (realization " + std::to_string(rz) + ")");
          }
        });

        for (std::size_t d = 0; d < decisions.size(); ++d) {
          FweCell cell;
          cell.method = decisions[d].method;
          cell.inference = decisions[d].inference;
          cell.test_kind = kind;
          cell.regressor = config.regressors[ri];
          cell.smoothing_mm = smoothing;
          cell.cdt_p = decisions[d].cdt_p;
          cell.n_realizations = config.n_realizations;
          for (const auto& res : results) cell.rejections += res.events[d];
          cell.empirical_fwe = static_cast<double>(cell.rejections) / static_cast<double>(cell.n_realizations);
          std::tie(cell.ci_low, cell.ci_high) = binomial_ci(cell.rejections, cell.n_realizations);
          report.cells.push_back(cell);
        }

        if (collect) {
          for (std::size_t ci = 0; ci < config.cdt_p_levels.size(); ++ci) {
            ExtentDiagnostics diag;
            diag.test_kind = kind;
            diag.regressor = config.regressors[ri];
            diag.smoothing_mm = smoothing;
            diag.cdt_p = config.cdt_p_levels[ci];
            std::vector<double> extents, betas;
            double model_sum = 0.0, m_sum = 0.0;
            std::size_t maps = 0;
            for (const auto& res : results) {
              const ClusterSample& cs = res.cluster_samples[ci];
              if (cs.m <= 0.0) continue;
              ++maps;
              m_sum += cs.m;
              for (std::size_t e : cs.extents) {
                extents.push_back(static_cast<double>(e));
                betas.push_back(cs.beta);
                model_sum += cs.mean_extent_model;
              }
            }
            diag.n_clusters = extents.size();
            if (!extents.empty()) {
              diag.mean_extent = std::accumulate(extents.begin(), extents.end(), 0.0) / static_cast<double>(extents.size());
              diag.mean_model_extent = model_sum / static_cast<double>(extents.size());
            }
            if (maps > 0) {
              diag.mean_clusters_per_map = static_cast<double>(extents.size()) / static_cast<double>(maps);
              diag.mean_expected_clusters = m_sum / static_cast<double>(maps);
            }
            diag.ks_distance = extent_ks_distance(extents, betas);
            report.extent_diagnostics.push_back(diag);
          }
        }
      }
      ++pool_cells_done;
      if (options.progress) options.progress(pool_cells_done, n_pool_cells);
    }
  }
  return report;
}

SummaryTable summarize(std::span<const FweReport> reports) {
  SummaryTable table;
  if (reports.empty()) return table;
  table.alpha = reports.front().alpha;
  for (const auto& r : reports) {
    if (r.alpha != table.alpha) fail(ErrorKind::invalid_argument, "reports disagree on alpha");
    table.provenance.push_back(r.provenance);
    for (const auto& c : r.cells)
      table.rows.push_back({c, table.alpha < c.ci_low || table.alpha > c.ci_high});
  }
  auto key = [](const SummaryRow& r) {
    const auto& c = r.cell;
    return std::tuple(static_cast<int>(c.method), static_cast<int>(c.inference), static_cast<int>(c.test_kind),
                      static_cast<int>(c.regressor), c.smoothing_mm, c.cdt_p);
  };
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [&](const SummaryRow& a, const SummaryRow& b) { return key(a) < key(b); });
  return table;
}

std::string report_csv(const SummaryTable& table) {
  std::ostringstream out;
  for (const auto& p : table.provenance)
    out << "# master_seed=" << p.master_seed << " config_hash=" << p.config_hash
        << " software_version=" << p.software_version << '\n';
  out << "# alpha=" << fmt_number(table.alpha) << '\n';
  out << report_csv_header << '\n';
  for (const auto& row : table.rows) {
    const auto& c = row.cell;
    out << to_string(c.method) << ',' << to_string(c.inference) << ',' << to_string(c.test_kind) << ','
        << to_string(c.regressor) << ',' << fmt_number(c.smoothing_mm) << ','
        << (c.inference == Inference::peak ? std::string("NA") : fmt_number(c.cdt_p)) << ','
        << fmt_number(c.empirical_fwe) << ',' << fmt_number(c.ci_low) << ',' << fmt_number(c.ci_high) << ','
        << c.n_realizations << ',' << c.rejections << ',' << (row.flagged ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string report_json(const SummaryTable& table) {
  nlohmann::ordered_json j;
  j["provenance"] = nlohmann::ordered_json::array();
  for (const auto& p : table.provenance)
    j["provenance"].push_back(
        {{"master_seed", p.master_seed}, {"config_hash", p.config_hash}, {"software_version", p.software_version}});
  j["alpha"] = table.alpha;
  auto& results = j["results"];
  results = nlohmann::ordered_json::object();
  for (const auto& row : table.rows) {
    const auto& c = row.cell;
    const std::string thr = c.inference == Inference::peak ? "peak" : "cdt_p=" + fmt_number(c.cdt_p);
    results[to_string(c.method)][to_string(c.inference)][to_string(c.test_kind)][to_string(c.regressor)]
           ["smoothing_mm=" + fmt_number(c.smoothing_mm)][thr] = {{"empirical_fwe", c.empirical_fwe},
                                                                  {"ci_low", c.ci_low},
                                                                  {"ci_high", c.ci_high},
                                                                  {"n_realizations", c.n_realizations},
                                                                  {"rejections", c.rejections},
                                                                  {"flagged", row.flagged}};
  }
  return j.dump(2) + "\n";
}

}  // namespace rftval
