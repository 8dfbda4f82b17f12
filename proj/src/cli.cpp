#include "rftval/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "rftval/cluster.hpp"
#include "rftval/config.hpp"
#include "rftval/error.hpp"
#include "rftval/glm.hpp"
#include "rftval/plot.hpp"
#include "rftval/rft.hpp"
#include "rftval/seed.hpp"
#include "rftval/volume_io.hpp"

#ifndef RFTVAL_VERSION
#define RFTVAL_VERSION "0.0.0"
#endif

namespace rftval {
namespace {

namespace fs = std::filesystem;

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fnv1a_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  out.close();
  if (!out) fail(ErrorKind::io_error, "cannot write " + p.string());
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::io_error, "cannot create output directory " + dir.string());
}

// Collects output files and writes manifest.json after everything else.
class Manifest {
 public:
  Manifest(std::string command, fs::path out_dir) : command_(std::move(command)), dir_(std::move(out_dir)) {
    json_["tool"] = "rftval";
    json_["version"] = RFTVAL_VERSION;
    json_["command"] = command_;
    json_["started_utc"] = utc_now();
    json_["output_dir"] = dir_.string();
  }
  nlohmann::ordered_json& json() { return json_; }
  void add(const std::string& name) { files_.push_back(name); }
  void commit() {
    json_["finished_utc"] = utc_now();
    auto& files = json_["files"];
    files = nlohmann::ordered_json::array();
    for (const auto& f : files_)
      files.push_back({{"path", f}, {"bytes", fs::file_size(dir_ / f)}, {"fnv1a", fnv1a_file(dir_ / f)}});
    write_text(dir_ / "manifest.json", json_.dump(2) + "\n");
  }

 private:
  std::string command_;
  fs::path dir_;
  nlohmann::ordered_json json_;
  std::vector<std::string> files_;
};

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides,
                         const std::optional<std::uint64_t>& seed) {
  RunConfig config = path.empty() ? RunConfig{} : load_config(path);
  for (const auto& o : overrides) apply_override(config, o);
  if (seed) config.experiment.master_seed = *seed;
  return config;
}

void describe_config(Manifest& m, const std::string& path, const RunConfig& config) {
  m.json()["config_path"] = path;
  m.json()["config_hash"] = config.experiment.hash();
  m.json()["master_seed"] = config.experiment.master_seed;
  m.json()["resolved_config"] = to_config_text(config);
}

struct CommonArgs {
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

int cmd_validate_fwe(const CommonArgs& args, unsigned jobs, std::ostream& out, std::ostream& err) {
  const RunConfig config = resolve_config(args.config, args.overrides, args.seed);
  config.experiment.validate();
  const fs::path dir = args.out;
  prepare_dir(dir);
  Manifest manifest("validate-fwe", dir);
  describe_config(manifest, args.config, config);

  RunOptions options;
  options.jobs = jobs;
  options.progress = [&err](std::size_t done, std::size_t total) {
    err << "cell " << done << "/" << total << " done\n" << std::flush;
  };
  const FweReport report = run_experiment(config.experiment, options);
  const SummaryTable table = summarize(std::span(&report, 1));

  write_text(dir / "report.csv", report_csv(table));
  manifest.add("report.csv");
  write_text(dir / "report.json", report_json(table));
  manifest.add("report.json");
  for (auto reg : config.experiment.regressors) {
    const std::string name = std::string("fwe_") + to_string(reg) + ".svg";
    write_text(dir / name, fwe_svg(table, reg));
    manifest.add(name);
  }
  manifest.commit();

  std::size_t flagged = 0;
  for (const auto& r : table.rows) flagged += r.flagged ? 1 : 0;
  out << table.rows.size() << " cells, " << flagged << " with a CI excluding alpha = " << table.alpha << "\n";
  return exit_ok;
}

Vec3 parse_fwhm(const std::string& text) {
  std::vector<double> xs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      xs.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorKind::config_error, "--fwhm expects MM or MX,MY,MZ, got '" + text + "'");
    }
  }
  if (xs.size() == 1) return {xs[0], xs[0], xs[0]};
  if (xs.size() == 3) return {xs[0], xs[1], xs[2]};
  fail(ErrorKind::config_error, "--fwhm expects MM or MX,MY,MZ, got '" + text + "'");
}

struct AnalyzeArgs {
  std::string map, mask, fwhm, out;
  std::vector<std::string> residuals;
  std::optional<double> df, u, cdt_p;
  double alpha = 0.05;
  int connectivity = 18;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  const Volume map_vol = read_volume(a.map);
  const Grid& grid = map_vol.grid();
  Mask mask(grid.size(), 1);
  if (!a.mask.empty()) {
    const Volume m = read_volume(a.mask);
    if (!(m.grid().dims() == grid.dims())) fail(ErrorKind::invalid_argument, "mask dimensions differ from the map");
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = m[i] != 0.0 ? 1 : 0;
  }
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!std::isfinite(map_vol[i])) mask[i] = 0;
  if (mask_count(mask) == 0) fail(ErrorKind::invalid_argument, "mask is empty");

  const FieldSpec field = a.df ? FieldSpec::student_t(*a.df) : FieldSpec::gaussian();
  field.validate();
  StatMap map{grid, mask, std::vector<double>(grid.size(), 0.0), field, {}, {}, {}, 0};
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) map.t_values[i] = map_vol[i];

  if (!a.fwhm.empty()) {
    map.populate_smoothness(parse_fwhm(a.fwhm));
  } else if (!a.residuals.empty()) {
    map.n_residual_fields = a.residuals.size();
    map.residuals.reserve(grid.size() * a.residuals.size());
    for (const auto& r : a.residuals) {
      const Volume rv = read_volume(r);
      if (!(rv.grid().dims() == grid.dims())) fail(ErrorKind::invalid_argument, r + ": dimensions differ from the map");
      map.residuals.insert(map.residuals.end(), rv.values().begin(), rv.values().end());
    }
    standardize_residuals(map.residuals, map.n_residual_fields, mask);
    map.populate_smoothness();
  } else {
    fail(ErrorKind::incomplete_context,
         "no smoothness information; pass --fwhm MM (known smoothness) or --residuals FILE... (estimate it)");
  }

  if (a.u && a.cdt_p) fail(ErrorKind::config_error, "give either --u or --cdt-p, not both");
  const double u = a.u ? *a.u : cdt_from_p(a.cdt_p.value_or(0.001), field);
  const Connectivity conn = connectivity_from_int(a.connectivity);
  const Labeling lab = label_clusters(map, u, conn);
  const ClusterTable table = cluster_table(lab, map, u, conn, a.alpha);

  const fs::path dir = a.out;
  prepare_dir(dir);
  Manifest manifest("analyze", dir);
  manifest.json()["map"] = a.map;
  manifest.json()["field"] = field.describe();
  manifest.json()["u"] = u;
  manifest.json()["fwhm_mm"] = map.smoothness->fwhm_mm;
  write_cluster_csv(table, dir / "clusters.csv");
  manifest.add("clusters.csv");
  write_cluster_json(table, dir / "clusters.json");
  manifest.add("clusters.json");
  manifest.commit();

  const double peak_p = peak_fwe_p(map.max_t(), *map.resels, field);
  if (table.rows.empty()) {
    out << "no suprathreshold voxels at u = " << u << "; peak p_fwe = " << peak_p << "\n";
  } else {
    std::size_t sig = 0;
    for (const auto& r : table.rows) sig += r.p_fwe_extent < a.alpha ? 1 : 0;
    out << (table.significant() ? "FWE significant: " : "not significant: ") << sig << " of " << table.rows.size()
        << " clusters with extent p_fwe < " << a.alpha << " at u = " << u << "; peak p_fwe = " << peak_p << "\n";
  }
  return exit_ok;
}

int cmd_simulate(const CommonArgs& args, std::ostream& out) {
  const RunConfig config = resolve_config(args.config, args.overrides, args.seed);
  const auto& e = config.experiment;
  const auto& s = config.simulate;
  if (s.n_subjects < 1) fail(ErrorKind::config_error, "simulate.n_subjects must be >= 1");
  if (!(s.smoothing_mm >= 0.0)) fail(ErrorKind::config_error, "simulate.smoothing_mm must be >= 0");
  const MaskedGrid g = make_grid(e.dims, e.voxel_size_mm, e.mask_shape);
  const fs::path dir = args.out;
  prepare_dir(dir);
  Manifest manifest("simulate", dir);
  describe_config(manifest, args.config, config);

  const Regressor reg = default_regressor(s.regressor, e.n_scans, e.tr, e.master_seed);
  const Volume profile(g.grid, g.mask, std::vector<double>(g.grid.size(), 1.0));
  std::size_t written = 0;
  for (std::size_t j = 0; j < s.n_subjects; ++j) {
    TimeSeriesDataset ds = synth_subject_data(g.grid, g.mask, e.n_scans, e.tr, {s.smoothing_mm, s.smoothing_mm, s.smoothing_mm},
                                              e.ar1, mix_seed(e.master_seed, {stream::noise, j}));
    ds = inject_shared_signal(std::move(ds), reg.samples, s.signal_amplitude, profile);
    for (std::size_t t = 0; t < e.n_scans; ++t) {
      char stem[64];
      std::snprintf(stem, sizeof stem, "sub-%03zu_scan-%04zu", j, t);
      const Volume vol = ds.scan_volume(t);
      if (s.format != VolumeFormat::raw) {
        write_volume(vol, dir / (std::string(stem) + ".nii"));
        manifest.add(std::string(stem) + ".nii");
        ++written;
      }
      if (s.format != VolumeFormat::nii) {
        write_volume(vol, dir / (std::string(stem) + ".raw"));
        manifest.add(std::string(stem) + ".raw");
        manifest.add(std::string(stem) + ".txt");
        ++written;
      }
    }
  }
  manifest.commit();
  out << written << " volumes written to " << dir.string() << "\n";
  return exit_ok;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::config_error:
    case ErrorKind::incomplete_context:
      return exit_usage;
    case ErrorKind::io_error:
      return exit_io;
    default:
      return exit_numeric;
  }
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Random field theory FWE inference and Monte Carlo validation", "rftval"};
  app.set_version_flag("--version", RFTVAL_VERSION);
  app.require_subcommand(1);

  CommonArgs common;
  unsigned jobs = 1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Config file (TOML subset)");
    sub->add_option("--out", common.out, "Output directory")->required();
    sub->add_option("--set", common.overrides, "Override KEY=VALUE (repeatable)");
    sub->add_option("--seed", common.seed, "Override master_seed");
  };
  auto* validate = app.add_subcommand("validate-fwe", "Monte Carlo FWE sweep on synthetic nulls");
  add_common(validate);
  validate->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "Write synthetic null subjects as volumes");
  add_common(simulate);

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Peak and cluster inference on one statistic map");
  analyze->add_option("--map", an.map, "Statistic map (.nii or .raw)")->required();
  analyze->add_option("--mask", an.mask, "Mask volume; nonzero voxels are analysed");
  analyze->add_option("--fwhm", an.fwhm, "Known smoothness in mm: MM or MX,MY,MZ");
  analyze->add_option("--residuals", an.residuals, "Residual volumes to estimate smoothness from")->expected(1, -1);
  analyze->add_option("--df", an.df, "Degrees of freedom of a t map (omit for a Gaussian map)");
  analyze->add_option("--u", an.u, "Cluster-forming threshold on the map scale");
  analyze->add_option("--cdt-p", an.cdt_p, "Cluster-forming threshold as an uncorrected p (default 0.001)");
  analyze->add_option("--alpha", an.alpha, "FWE level");
  analyze->add_option("--connectivity", an.connectivity, "6, 18 or 26");
  analyze->add_option("--out", an.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForVersion&) {
    out << RFTVAL_VERSION << "\n";
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "rftval: " << e.what() << "\n";
    return exit_usage;
  }

  try {
    if (validate->parsed()) return cmd_validate_fwe(common, jobs, out, err);
    if (simulate->parsed()) return cmd_simulate(common, out);
    return cmd_analyze(an, out);
  } catch (const Error& e) {
    err << "rftval: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "rftval: io_error: " << e.what() << "\n";
    return exit_io;
  } catch (const std::exception& e) {
    err << "rftval: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace rftval
