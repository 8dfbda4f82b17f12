#include "rftval/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "rftval/error.hpp"

namespace rftval {
namespace {

struct Token {
  std::string text;
  bool quoted = false;
};

struct Value {
  std::vector<Token> items;
  bool array = false;
};

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  fail(ErrorKind::config_error, where + ": " + what);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Drops a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

Token parse_token(const std::string& raw, const std::string& where) {
  const std::string s = trim(raw);
  if (s.empty()) bad(where, "empty value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') bad(where, "unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '\\' && i + 2 < s.size()) ++i;
      out.push_back(s[i]);
    }
    return {out, true};
  }
  return {s, false};
}

Value parse_value(const std::string& raw, const std::string& where, bool loose_lists) {
  const std::string s = trim(raw);
  Value v;
  std::string body = s;
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') bad(where, "unterminated array");
    v.array = true;
    body = s.substr(1, s.size() - 2);
  } else if (loose_lists && s.find(',') != std::string::npos) {
    v.array = true;
  }
  if (!v.array) {
    v.items.push_back(parse_token(s, where));
    return v;
  }
  std::string cur;
  bool in_string = false;
  for (char c : body) {
    if (c == '"') in_string = !in_string;
    if (c == ',' && !in_string) {
      if (!trim(cur).empty()) v.items.push_back(parse_token(cur, where));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) v.items.push_back(parse_token(cur, where));
  return v;
}

double to_double(const Token& t, const std::string& where) {
  double out = 0.0;
  const char* end = t.text.data() + t.text.size();
  auto [ptr, ec] = std::from_chars(t.text.data(), end, out);
  if (t.quoted || ec != std::errc() || ptr != end) bad(where, "expected a number, got '" + t.text + "'");
  return out;
}

std::uint64_t to_u64(const Token& t, const std::string& where) {
  std::uint64_t out = 0;
  const char* end = t.text.data() + t.text.size();
  auto [ptr, ec] = std::from_chars(t.text.data(), end, out);
  if (t.quoted || ec != std::errc() || ptr != end)
    bad(where, "expected a non-negative integer, got '" + t.text + "'");
  return out;
}

const Token& scalar(const Value& v, const std::string& where) {
  if (v.array || v.items.size() != 1) bad(where, "expected a single value");
  return v.items.front();
}

template <typename T, typename Convert>
std::vector<T> list(const Value& v, const std::string& where, Convert convert) {
  std::vector<T> out;
  for (const auto& t : v.items) out.push_back(convert(t, where));
  if (out.empty()) bad(where, "list must not be empty");
  return out;
}

template <typename Fn>
auto wrap(Fn fn, const std::string& where) {
  try {
    return fn();
  } catch (const Error& e) {
    bad(where, e.what());
  }
}

std::string fmt(double v) {
  // Shortest text that reads back to the same double.
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f) {
  std::string out = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + f(xs[i]);
  return out + "]";
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

struct Field {
  std::string key;
  std::function<void(RunConfig&, const Value&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
  using W = const std::string&;
  static const std::vector<Field> table = {
      {"master_seed", [](RunConfig& c, const Value& v, W w) { c.experiment.master_seed = to_u64(scalar(v, w), w); },
       [](const RunConfig& c) { return std::to_string(c.experiment.master_seed); }},
      {"alpha", [](RunConfig& c, const Value& v, W w) { c.experiment.alpha = to_double(scalar(v, w), w); },
       [](const RunConfig& c) { return fmt(c.experiment.alpha); }},
      {"n_realizations",
       [](RunConfig& c, const Value& v, W w) { c.experiment.n_realizations = to_u64(scalar(v, w), w); },
       [](const RunConfig& c) { return std::to_string(c.experiment.n_realizations); }},
      {"grid.dims",
       [](RunConfig& c, const Value& v, W w) {
         const auto xs = list<std::uint64_t>(v, w, to_u64);
         if (xs.size() != 3 && xs.size() != 1) bad(w, "dims needs 1 or 3 entries");
         for (int a = 0; a < 3; ++a) c.experiment.dims[a] = xs[xs.size() == 1 ? 0 : a];
       },
       [](const RunConfig& c) {
         const auto& d = c.experiment.dims;
         return join(std::vector<std::size_t>(d.begin(), d.end()), [](std::size_t x) { return std::to_string(x); });
       }},
      {"grid.voxel_size",
       [](RunConfig& c, const Value& v, W w) {
         const auto xs = list<double>(v, w, to_double);
         if (xs.size() != 3 && xs.size() != 1) bad(w, "voxel_size needs 1 or 3 entries");
         for (int a = 0; a < 3; ++a) c.experiment.voxel_size_mm[a] = xs[xs.size() == 1 ? 0 : a];
       },
       [](const RunConfig& c) {
         const auto& d = c.experiment.voxel_size_mm;
         return join(std::vector<double>(d.begin(), d.end()), fmt);
       }},
      {"grid.mask",
       [](RunConfig& c, const Value& v, W w) {
         const auto& s = scalar(v, w).text;
         if (s == "full_box") c.experiment.mask_shape = MaskShape::full_box;
         else if (s == "centered_ellipsoid") c.experiment.mask_shape = MaskShape::centered_ellipsoid;
         else bad(w, "mask must be full_box or centered_ellipsoid");
       },
       [](const RunConfig& c) {
         return quote(c.experiment.mask_shape == MaskShape::full_box ? "full_box" : "centered_ellipsoid");
       }},
      {"data.n_scans", [](RunConfig& c, const Value& v, W w) { c.experiment.n_scans = to_u64(scalar(v, w), w); },
       [](const RunConfig& c) { return std::to_string(c.experiment.n_scans); }},
      {"data.tr", [](RunConfig& c, const Value& v, W w) { c.experiment.tr = to_double(scalar(v, w), w); },
       [](const RunConfig& c) { return fmt(c.experiment.tr); }},
      {"data.ar1", [](RunConfig& c, const Value& v, W w) { c.experiment.ar1 = to_double(scalar(v, w), w); },
       [](const RunConfig& c) { return fmt(c.experiment.ar1); }},
      {"data.drift_order",
       [](RunConfig& c, const Value& v, W w) { c.experiment.drift_order = to_u64(scalar(v, w), w); },
       [](const RunConfig& c) { return std::to_string(c.experiment.drift_order); }},
      {"experiment.n_subjects_pool",
       [](RunConfig& c, const Value& v, W w) { c.experiment.n_subjects_pool = to_u64(scalar(v, w), w); },
       [](const RunConfig& c) { return std::to_string(c.experiment.n_subjects_pool); }},
      {"experiment.group_size",
       [](RunConfig& c, const Value& v, W w) { c.experiment.group_size = to_u64(scalar(v, w), w); },
       [](const RunConfig& c) { return std::to_string(c.experiment.group_size); }},
      {"experiment.smoothing_levels_mm",
       [](RunConfig& c, const Value& v, W w) { c.experiment.smoothing_levels_mm = list<double>(v, w, to_double); },
       [](const RunConfig& c) { return join(c.experiment.smoothing_levels_mm, fmt); }},
      {"experiment.regressors",
       [](RunConfig& c, const Value& v, W w) {
         c.experiment.regressors = list<RegressorLabel>(
             v, w, [](const Token& t, W w2) { return wrap([&] { return regressor_label_from_string(t.text); }, w2); });
       },
       [](const RunConfig& c) {
         return join(c.experiment.regressors, [](RegressorLabel r) { return quote(to_string(r)); });
       }},
      {"experiment.cdt_p_levels",
       [](RunConfig& c, const Value& v, W w) { c.experiment.cdt_p_levels = list<double>(v, w, to_double); },
       [](const RunConfig& c) { return join(c.experiment.cdt_p_levels, fmt); }},
      {"experiment.test_kinds",
       [](RunConfig& c, const Value& v, W w) {
         c.experiment.test_kinds = list<TestKind>(
             v, w, [](const Token& t, W w2) { return wrap([&] { return test_kind_from_string(t.text); }, w2); });
       },
       [](const RunConfig& c) { return join(c.experiment.test_kinds, [](TestKind k) { return quote(to_string(k)); }); }},
      {"experiment.inferences",
       [](RunConfig& c, const Value& v, W w) {
         c.experiment.inferences = list<Inference>(
             v, w, [](const Token& t, W w2) { return wrap([&] { return inference_from_string(t.text); }, w2); });
       },
       [](const RunConfig& c) { return join(c.experiment.inferences, [](Inference i) { return quote(to_string(i)); }); }},
      {"experiment.methods",
       [](RunConfig& c, const Value& v, W w) {
         c.experiment.methods = list<Method>(
             v, w, [](const Token& t, W w2) { return wrap([&] { return method_from_string(t.text); }, w2); });
       },
       [](const RunConfig& c) { return join(c.experiment.methods, [](Method m) { return quote(to_string(m)); }); }},
      {"experiment.confound_amplitude",
       [](RunConfig& c, const Value& v, W w) { c.experiment.confound_amplitude = to_double(scalar(v, w), w); },
       [](const RunConfig& c) { return fmt(c.experiment.confound_amplitude); }},
      {"experiment.n_permutations",
       [](RunConfig& c, const Value& v, W w) { c.experiment.n_permutations = to_u64(scalar(v, w), w); },
       [](const RunConfig& c) { return std::to_string(c.experiment.n_permutations); }},
      {"experiment.connectivity",
       [](RunConfig& c, const Value& v, W w) {
         const auto n = to_u64(scalar(v, w), w);
         c.experiment.connectivity = wrap([&] { return connectivity_from_int(static_cast<int>(n)); }, w);
       },
       [](const RunConfig& c) { return std::to_string(to_int(c.experiment.connectivity)); }},
      {"experiment.smoothness",
       [](RunConfig& c, const Value& v, W w) {
         c.experiment.smoothness = wrap([&] { return smoothness_source_from_string(scalar(v, w).text); }, w);
       },
       [](const RunConfig& c) { return quote(to_string(c.experiment.smoothness)); }},
      {"simulate.n_subjects",
       [](RunConfig& c, const Value& v, W w) { c.simulate.n_subjects = to_u64(scalar(v, w), w); },
       [](const RunConfig& c) { return std::to_string(c.simulate.n_subjects); }},
      {"simulate.smoothing_mm",
       [](RunConfig& c, const Value& v, W w) { c.simulate.smoothing_mm = to_double(scalar(v, w), w); },
       [](const RunConfig& c) { return fmt(c.simulate.smoothing_mm); }},
      {"simulate.regressor",
       [](RunConfig& c, const Value& v, W w) {
         c.simulate.regressor = wrap([&] { return regressor_label_from_string(scalar(v, w).text); }, w);
       },
       [](const RunConfig& c) { return quote(to_string(c.simulate.regressor)); }},
      {"simulate.signal_amplitude",
       [](RunConfig& c, const Value& v, W w) { c.simulate.signal_amplitude = to_double(scalar(v, w), w); },
       [](const RunConfig& c) { return fmt(c.simulate.signal_amplitude); }},
      {"simulate.format",
       [](RunConfig& c, const Value& v, W w) {
         const auto& s = scalar(v, w).text;
         if (s == "raw") c.simulate.format = VolumeFormat::raw;
         else if (s == "nii") c.simulate.format = VolumeFormat::nii;
         else if (s == "both") c.simulate.format = VolumeFormat::both;
         else bad(w, "format must be raw, nii or both");
       },
       [](const RunConfig& c) {
         return quote(c.simulate.format == VolumeFormat::raw ? "raw" : c.simulate.format == VolumeFormat::nii ? "nii" : "both");
       }},
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::string& source) {
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line, table;
  std::set<std::string> seen;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const std::string where = source + ":" + std::to_string(number);
    const std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) bad(where, "malformed table header");
      table = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) bad(where, "expected 'key = value'");
    const std::string leaf = trim(s.substr(0, eq));
    const std::string key = table.empty() ? leaf : table + "." + leaf;
    const Field* field = find_field(key);
    if (!field) bad(where, "unknown key '" + key + "'");
    if (!seen.insert(key).second) bad(where, "duplicate key '" + key + "'");
    field->set(config, parse_value(s.substr(eq + 1), where + " (" + key + ")", false), where + " (" + key + ")");
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io_error, "cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) fail(ErrorKind::config_error, "--set expects KEY=VALUE, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  const Field* field = find_field(key);
  if (!field) {
    for (const auto& f : fields()) {
      const auto dot = f.key.rfind('.');
      const std::string leaf = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
      if (leaf != key) continue;
      if (field) fail(ErrorKind::config_error, "--set key '" + key + "' is ambiguous; use the dotted path");
      field = &f;
    }
  }
  if (!field) fail(ErrorKind::config_error, "--set: unknown key '" + key + "'");
  const std::string where = "--set " + field->key;
  field->set(config, parse_value(assignment.substr(eq + 1), where, true), where);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

std::string to_config_text(const RunConfig& config) {
  std::ostringstream out;
  std::string table;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string t = dot == std::string::npos ? "" : f.key.substr(0, dot);
    if (t != table) {
      out << "\n[" << t << "]\n";
      table = t;
    }
    out << f.key.substr(dot == std::string::npos ? 0 : dot + 1) << " = " << f.get(config) << '\n';
  }
  return out.str();
}

}  // namespace rftval
