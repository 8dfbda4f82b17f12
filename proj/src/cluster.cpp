#include "rftval/cluster.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <sstream>

#include "rftval/error.hpp"

namespace rftval {
namespace {

struct Offset {
  int dx, dy, dz;
};

// Neighbours preceding a voxel in raster order, restricted to the
// connectivity's neighbourhood.
std::vector<Offset> backward_offsets(Connectivity c) {
  const int reach = c == Connectivity::faces ? 1 : c == Connectivity::edges ? 2 : 3;
  std::vector<Offset> out;
  for (int dz = -1; dz <= 0; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const bool before = dz < 0 || (dz == 0 && dy < 0) || (dz == 0 && dy == 0 && dx < 0);
        if (!before) continue;
        if (std::abs(dx) + std::abs(dy) + std::abs(dz) > reach) continue;
        out.push_back({dx, dy, dz});
      }
  return out;
}

std::int32_t find_root(std::vector<std::int32_t>& parent, std::int32_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

std::string format_double(double v) {
  // Shortest text that reads back to the same double.
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

Connectivity connectivity_from_int(int n) {
  switch (n) {
    case 6: return Connectivity::faces;
    case 18: return Connectivity::edges;
    case 26: return Connectivity::corners;
    default: fail(ErrorKind::invalid_argument, "connectivity must be 6, 18 or 26");
  }
}

std::size_t Labeling::max_extent() const noexcept {
  std::size_t best = 0;
  for (const auto& c : components) best = std::max(best, c.extent);
  return best;
}

Labeling label_clusters(const Grid& grid, const Mask& mask, std::span<const double> values, double u,
                        Connectivity connectivity) {
  require(std::isfinite(u), "cluster-forming threshold must be finite");
  require(values.size() == grid.size() && mask.size() == grid.size(), "map size does not match grid");
  const auto& d = grid.dims();
  const auto offsets = backward_offsets(connectivity);

  Labeling out;
  out.labels.assign(grid.size(), 0);
  std::vector<std::int32_t> parent{0};  // provisional label -> parent; slot 0 unused

  // First pass: provisional labels, merging with labelled backward neighbours.
  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x) {
        const std::size_t i = grid.index(x, y, z);
        if (!mask[i] || !(values[i] > u)) continue;
        std::int32_t label = 0;
        for (const auto& o : offsets) {
          const auto nx = static_cast<std::ptrdiff_t>(x) + o.dx;
          const auto ny = static_cast<std::ptrdiff_t>(y) + o.dy;
          const auto nz = static_cast<std::ptrdiff_t>(z) + o.dz;
          if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<std::ptrdiff_t>(d[0]) ||
              ny >= static_cast<std::ptrdiff_t>(d[1]))
            continue;
          const std::int32_t other =
              out.labels[grid.index(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny),
                                    static_cast<std::size_t>(nz))];
          if (other == 0) continue;
          if (label == 0) {
            label = find_root(parent, other);
          } else {
            const std::int32_t a = find_root(parent, label), b = find_root(parent, other);
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
            label = std::min(a, b);
          }
        }
        if (label == 0) {
          label = static_cast<std::int32_t>(parent.size());
          parent.push_back(label);
        }
        out.labels[i] = label;
      }

  // Second pass: resolve roots and renumber in raster order of first voxel.
  std::vector<std::int32_t> final_label(parent.size(), 0);
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    if (out.labels[i] == 0) continue;
    const std::int32_t root = find_root(parent, out.labels[i]);
    if (final_label[root] == 0) {
      out.components.push_back({0, i});
      final_label[root] = static_cast<std::int32_t>(out.components.size());
    }
    out.labels[i] = final_label[root];
    ++out.components[static_cast<std::size_t>(out.labels[i] - 1)].extent;
  }
  return out;
}

Labeling label_clusters(const StatMap& map, double u, Connectivity connectivity) {
  return label_clusters(map.grid, map.mask, map.t_values, u, connectivity);
}

bool ClusterTable::significant() const noexcept {
  return std::any_of(rows.begin(), rows.end(), [&](const ClusterRow& r) { return r.p_fwe_extent < context.alpha; });
}

ClusterTable cluster_table(const Labeling& labeling, const StatMap& map, double u, Connectivity connectivity,
                           double alpha) {
  if (!map.smoothness || !map.resels)
    fail(ErrorKind::incomplete_context, "statistic map has no smoothness/resel metadata");
  require(labeling.labels.size() == map.grid.size(), "labeling does not match the map grid");
  ClusterTable table;
  table.context = {u, connectivity, map.field, *map.resels, std::nullopt, alpha};
  if (labeling.components.empty()) return table;

  const NoskoParams np =
      nosko_params(u, *map.resels, map.field, mask_count(map.mask), map.smoothness->fwhm_voxels);
  table.context.nosko = np;

  table.rows.resize(labeling.components.size());
  for (std::size_t c = 0; c < labeling.components.size(); ++c) {
    auto& row = table.rows[c];
    row.cluster_id = c + 1;
    row.extent_voxels = labeling.components[c].extent;
    row.peak_t = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t i = 0; i < labeling.labels.size(); ++i) {
    const auto label = labeling.labels[i];
    if (label == 0) continue;
    auto& row = table.rows[static_cast<std::size_t>(label - 1)];
    if (map.t_values[i] > row.peak_t) {
      row.peak_t = map.t_values[i];
      row.peak_xyz = map.grid.coords(i);
    }
  }
  for (auto& row : table.rows) {
    const auto k = static_cast<double>(row.extent_voxels);
    row.p_unc_extent = extent_survival(k, np);
    row.p_fwe_extent = cluster_fwe_p(k, np);
    row.p_fwe_peak = peak_fwe_p(row.peak_t, *map.resels, map.field);
  }
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const ClusterRow& a, const ClusterRow& b) { return a.extent_voxels > b.extent_voxels; });
  return table;
}

void write_cluster_csv(const ClusterTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io_error, "cannot open " + path.string());
  out << cluster_csv_header << '\n';
  for (const auto& r : table.rows)
    out << r.cluster_id << ',' << r.extent_voxels << ',' << format_double(r.peak_t) << ',' << r.peak_xyz[0] << ','
        << r.peak_xyz[1] << ',' << r.peak_xyz[2] << ',' << format_double(r.p_unc_extent) << ','
        << format_double(r.p_fwe_extent) << ',' << format_double(r.p_fwe_peak) << '\n';
  if (!out) fail(ErrorKind::io_error, "write failed: " + path.string());
}

void write_cluster_json(const ClusterTable& table, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  const auto& c = table.context;
  j["context"] = {{"u", c.u},
                  {"connectivity", to_int(c.connectivity)},
                  {"field", c.field.kind == FieldKind::gaussian ? "gaussian" : "student_t"},
                  {"df", c.field.df},
                  {"resels", {c.resels[0], c.resels[1], c.resels[2], c.resels[3]}},
                  {"alpha", c.alpha}};
  if (c.nosko)
    j["context"]["nosko"] = {{"m", c.nosko->m}, {"ev_voxels", c.nosko->ev_voxels}, {"beta", c.nosko->beta}};
  j["significant"] = table.significant();
  j["clusters"] = nlohmann::ordered_json::array();
  for (const auto& r : table.rows)
    j["clusters"].push_back({{"cluster_id", r.cluster_id},
                             {"extent_voxels", r.extent_voxels},
                             {"peak_t", r.peak_t},
                             {"peak_x", r.peak_xyz[0]},
                             {"peak_y", r.peak_xyz[1]},
                             {"peak_z", r.peak_xyz[2]},
                             {"p_unc_extent", r.p_unc_extent},
                             {"p_fwe_extent", r.p_fwe_extent},
                             {"p_fwe_peak", r.p_fwe_peak}});
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io_error, "cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::io_error, "write failed: " + path.string());
}

}  // namespace rftval
