#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "rftval/cli.hpp"
#include "rftval/config.hpp"
#include "rftval/error.hpp"
#include "rftval/rft.hpp"
#include "rftval/volume_io.hpp"

using namespace rftval;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rftval");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string config_error_message(const std::string& text) {
  try {
    parse_config(text, "run.toml");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config_error);
    return e.what();
  }
  FAIL("expected config_error");
  return {};
}

const std::vector<std::string> tiny = {"--set", "grid.dims=10",         "--set", "data.n_scans=30",
                                       "--set", "data.drift_order=2",   "--set", "n_subjects_pool=6",
                                       "--set", "group_size=3",         "--set", "n_realizations=3",
                                       "--set", "smoothing_levels_mm=6", "--set", "regressors=B1,E1"};

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config(R"(# sweep
master_seed = 99
alpha = 0.01   # trailing comment

[grid]
dims = [16, 20, 24]
voxel_size = 2.5
mask = "centered_ellipsoid"

[experiment]
regressors = ["B2", "E1"]
smoothing_levels_mm = [4, 8.5]
test_kinds = ["one_sample"]
methods = ["rft", "permutation"]
connectivity = 26

[simulate]
format = "both"
)");
  CHECK(c.experiment.master_seed == 99);
  CHECK(c.experiment.alpha == 0.01);
  CHECK(c.experiment.dims == Index3{16, 20, 24});
  CHECK(c.experiment.voxel_size_mm == Vec3{2.5, 2.5, 2.5});
  CHECK(c.experiment.mask_shape == MaskShape::centered_ellipsoid);
  CHECK(c.experiment.regressors == std::vector{RegressorLabel::B2, RegressorLabel::E1});
  CHECK(c.experiment.smoothing_levels_mm == std::vector{4.0, 8.5});
  CHECK(c.experiment.test_kinds == std::vector{TestKind::one_sample});
  CHECK(c.experiment.methods.size() == 2);
  CHECK(c.experiment.connectivity == Connectivity::corners);
  CHECK(c.simulate.format == VolumeFormat::both);

  // Round trip through the resolved text.
  const auto again = parse_config(to_config_text(c));
  CHECK(again.experiment.canonical() == c.experiment.canonical());
  CHECK(to_config_text(again) == to_config_text(c));
  CHECK(to_config_text(parse_config("")) == to_config_text(RunConfig{}));
}

TEST_CASE("config diagnostics carry the line") {
  CHECK(config_error_message("alpha = 0.05\nbogus = 1\n").find("run.toml:2") != std::string::npos);
  CHECK(config_error_message("alpha = 0.05\nbogus = 1\n").find("bogus") != std::string::npos);
  CHECK(config_error_message("[data]\nar1 = 0.1\nar1 = 0.2\n").find("run.toml:3") != std::string::npos);
  CHECK(config_error_message("[data]\nar1 = 0.1\nar1 = 0.2\n").find("duplicate") != std::string::npos);
  CHECK(config_error_message("[data]\nn_scans = ten\n").find("data.n_scans") != std::string::npos);
  CHECK(config_error_message("[grid]\ndims = [1, 2]\n").find("run.toml:2") != std::string::npos);
  CHECK(config_error_message("[grid\n").find("run.toml:1") != std::string::npos);
  CHECK(config_error_message("[experiment]\nmethods = [\"rft\"\n").find("unterminated") != std::string::npos);
  CHECK(config_error_message("[experiment]\nmethods = [\"bayes\"]\n").find("bayes") != std::string::npos);

  try {
    load_config("/nonexistent/run.toml");
    FAIL("expected io_error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io_error);
  }
}

TEST_CASE("overrides") {
  RunConfig c;
  apply_override(c, "data.ar1=0.35");
  apply_override(c, "n_realizations=12");
  apply_override(c, "smoothing_levels_mm=3,6,9");
  apply_override(c, "regressors=[\"E2\"]");
  CHECK(c.experiment.ar1 == 0.35);
  CHECK(c.experiment.n_realizations == 12);
  CHECK(c.experiment.smoothing_levels_mm == std::vector{3.0, 6.0, 9.0});
  CHECK(c.experiment.regressors == std::vector{RegressorLabel::E2});
  CHECK_THROWS_AS(apply_override(c, "nonsense=1"), Error);
  CHECK_THROWS_AS(apply_override(c, "data.ar1"), Error);

  // Leaves shared by two tables must be addressed by their dotted path.
  std::map<std::string, int> leaves;
  for (const auto& k : config_keys()) ++leaves[k.substr(k.rfind('.') + 1)];
  CHECK(leaves.size() > 20);
  for (const auto& [leaf, n] : leaves)
    if (n > 1) CHECK_THROWS_AS(apply_override(c, leaf + "=1"), Error);
}

TEST_CASE("cli exit codes") {
  CHECK(cli({}).code == exit_usage);
  CHECK(cli({"validate-fwe"}).code == exit_usage);
  CHECK(cli({"frobnicate"}).code == exit_usage);
  CHECK(cli({"--version"}).code == exit_ok);

  TempDir t("rftval_cli_codes");
  auto bad_set = cli({"validate-fwe", "--out", (t.path / "o").string(), "--set", "alpha=2"});
  CHECK(bad_set.code == exit_usage);
  CHECK(bad_set.err.find("alpha") != std::string::npos);
  CHECK(cli({"validate-fwe", "--out", (t.path / "o").string(), "--config", "/nonexistent.toml"}).code == exit_io);
  CHECK(cli({"analyze", "--map", (t.path / "none.nii").string(), "--fwhm", "9", "--out", (t.path / "a").string()}).code ==
        exit_io);

  // A lone extreme voxel on a Gaussian map puts the cluster model out of regime.
  Grid g({8, 8, 8}, {3, 3, 3});
  Volume v(g, Mask(g.size(), 1));
  v[g.index(4, 4, 4)] = 60.0;
  write_volume(v, t.path / "spike.nii");
  auto spike = cli({"analyze", "--map", (t.path / "spike.nii").string(), "--fwhm", "6", "--u", "50", "--out",
                    (t.path / "s").string()});
  CHECK(spike.code == exit_numeric);
  CHECK(spike.err.find("out_of_regime") != std::string::npos);

  auto no_smooth = cli({"analyze", "--map", (t.path / "spike.nii").string(), "--out", (t.path / "n").string()});
  CHECK(no_smooth.code == exit_usage);
  CHECK(no_smooth.err.find("--fwhm") != std::string::npos);
  CHECK(cli({"analyze", "--map", (t.path / "spike.nii").string(), "--fwhm", "a,b", "--out", (t.path / "n").string()}).code ==
        exit_usage);
}

TEST_CASE("analyze") {
  TempDir t("rftval_cli_analyze");
  Grid g({20, 20, 20}, {3, 3, 3});
  Volume zero(g, Mask(g.size(), 1));
  write_volume(zero, t.path / "zero.nii");
  auto r0 = cli({"analyze", "--map", (t.path / "zero.nii").string(), "--df", "18", "--fwhm", "9", "--out",
                 (t.path / "z").string()});
  CHECK(r0.code == exit_ok);
  CHECK(r0.out.find("no suprathreshold voxels") != std::string::npos);
  CHECK(fs::exists(t.path / "z" / "clusters.csv"));
  CHECK(fs::exists(t.path / "z" / "manifest.json"));

  // A 10 x 5 x 4 block of 200 voxels.
  Volume blob(g, Mask(g.size(), 1));
  for (std::size_t z = 3; z < 7; ++z)
    for (std::size_t y = 3; y < 8; ++y)
      for (std::size_t x = 3; x < 13; ++x) blob[g.index(x, y, z)] = 5.0;
  write_volume(blob, t.path / "blob.raw");
  auto r1 = cli({"analyze", "--map", (t.path / "blob.raw").string(), "--df", "18", "--fwhm", "9", "--cdt-p", "0.001",
                 "--out", (t.path / "b").string()});
  REQUIRE(r1.code == exit_ok);
  CHECK(r1.out.find("of 1 clusters") != std::string::npos);

  const auto j = nlohmann::json::parse(slurp(t.path / "b" / "clusters.json"));
  REQUIRE(j["clusters"].size() == 1);
  CHECK(j["clusters"][0]["extent_voxels"] == 200);
  const auto t18 = FieldSpec::student_t(18);
  const double u = cdt_from_p(0.001, t18);
  const auto R = resel_counts(g, Mask(g.size(), 1), {9, 9, 9});
  const auto np = nosko_params(u, R, t18, g.size(), {3, 3, 3});
  CHECK(std::abs(j["clusters"][0]["p_fwe_extent"].get<double>() - cluster_fwe_p(200.0, np)) < 1e-12);
  CHECK(std::abs(j["clusters"][0]["p_unc_extent"].get<double>() - extent_survival(200.0, np)) < 1e-12);
  CHECK(std::abs(j["clusters"][0]["p_fwe_peak"].get<double>() - peak_fwe_p(5.0, R, t18)) < 1e-12);
  CHECK(j["significant"] == (cluster_fwe_p(200.0, np) < 0.05));

  const auto m = nlohmann::json::parse(slurp(t.path / "b" / "manifest.json"));
  CHECK(m["command"] == "analyze");
  CHECK(m["files"].size() == 2);
}

TEST_CASE("simulate") {
  TempDir t("rftval_cli_simulate");
  const std::vector<std::string> args = {"--set", "simulate.n_subjects=1", "--set", "data.n_scans=4",
                                         "--set", "data.drift_order=1",    "--set", "grid.dims=8",
                                         "--set", "simulate.smoothing_mm=6"};
  auto run = [&](const std::string& dir) {
    std::vector<std::string> a{"simulate", "--out", (t.path / dir).string()};
    a.insert(a.end(), args.begin(), args.end());
    return cli(a);
  };
  REQUIRE(run("a").code == exit_ok);
  REQUIRE(run("b").code == exit_ok);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(t.path / "a")) {
    ++files;
    const auto name = e.path().filename().string();
    if (name != "manifest.json") CHECK(slurp(e.path()) == slurp(t.path / "b" / name));
  }
  CHECK(files == 5);
  CHECK(fs::exists(t.path / "a" / "sub-000_scan-0003.nii"));
  CHECK(read_volume(t.path / "a" / "sub-000_scan-0000.nii").grid().dims() == Index3{8, 8, 8});
}

TEST_CASE("validate-fwe outputs are reproducible across jobs") {
  TempDir t("rftval_cli_validate");
  auto run = [&](const std::string& dir, const std::string& jobs) {
    std::vector<std::string> a{"validate-fwe", "--out", (t.path / dir).string(), "--jobs", jobs, "--seed", "31"};
    a.insert(a.end(), tiny.begin(), tiny.end());
    return cli(a);
  };
  const auto r1 = run("j1", "1");
  const auto r2 = run("j2", "2");
  REQUIRE(r1.code == exit_ok);
  REQUIRE(r2.code == exit_ok);
  CHECK(r1.err.find("cell 2/2 done") != std::string::npos);
  for (const auto* f : {"report.csv", "report.json", "fwe_B1.svg", "fwe_E1.svg"}) {
    REQUIRE(fs::exists(t.path / "j1" / f));
    CHECK(slurp(t.path / "j1" / f) == slurp(t.path / "j2" / f));
  }
  const auto csv = slurp(t.path / "j1" / "report.csv");
  CHECK(csv.find("# master_seed=31 ") == 0);
  CHECK(slurp(t.path / "j1" / "fwe_B1.svg").find("<svg") != std::string::npos);

  const auto m = nlohmann::json::parse(slurp(t.path / "j1" / "manifest.json"));
  CHECK(m["master_seed"] == 31);
  CHECK(m["files"].size() == 4);
  CHECK(m["resolved_config"].get<std::string>().find("master_seed = 31") != std::string::npos);
  for (const auto& f : m["files"]) CHECK(fs::file_size(t.path / "j1" / f["path"].get<std::string>()) == f["bytes"]);
  // The resolved config reproduces the run on its own.
  std::ofstream(t.path / "resolved.toml") << m["resolved_config"].get<std::string>();
  REQUIRE(cli({"validate-fwe", "--out", (t.path / "j3").string(), "--config", (t.path / "resolved.toml").string()}).code ==
          exit_ok);
  CHECK(slurp(t.path / "j3" / "report.csv") == csv);
}
