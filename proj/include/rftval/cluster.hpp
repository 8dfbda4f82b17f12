#pragma once

// Suprathreshold connected components and cluster tables.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rftval/field.hpp"
#include "rftval/glm.hpp"
#include "rftval/lattice.hpp"
#include "rftval/rft.hpp"
#include "rftval/smoothness.hpp"

namespace rftval {

enum class Connectivity { faces = 6, edges = 18, corners = 26 };

Connectivity connectivity_from_int(int n);
inline int to_int(Connectivity c) noexcept { return static_cast<int>(c); }

struct Component {
  std::size_t extent = 0;
  std::size_t first_voxel = 0;  // raster index of the first voxel
};

/// Labels are 1-based in raster order of each component's first voxel; 0 is
/// background.
struct Labeling {
  std::vector<std::int32_t> labels;
  std::vector<Component> components;

  std::size_t max_extent() const noexcept;
};

/// Two-pass union-find labeling of {masked voxels with value > u}.
Labeling label_clusters(const Grid& grid, const Mask& mask, std::span<const double> values, double u,
                        Connectivity connectivity);
Labeling label_clusters(const StatMap& map, double u, Connectivity connectivity);

struct ClusterRow {
  std::size_t cluster_id = 0;
  std::size_t extent_voxels = 0;
  double peak_t = 0.0;
  Index3 peak_xyz{};
  double p_unc_extent = 1.0;
  double p_fwe_extent = 1.0;
  double p_fwe_peak = 1.0;
};

struct ClusterContext {
  double u = 0.0;
  Connectivity connectivity = Connectivity::edges;
  FieldSpec field;
  ReselCounts resels;
  std::optional<NoskoParams> nosko;  // absent when there are no clusters
  double alpha = 0.05;
};

struct ClusterTable {
  std::vector<ClusterRow> rows;  // descending extent
  ClusterContext context;

  /// Map-level family-wise decision: smallest extent p-value below alpha.
  bool significant() const noexcept;
};

/// Builds the table for a labeling of `map`, which must carry smoothness and
/// resel metadata.
ClusterTable cluster_table(const Labeling& labeling, const StatMap& map, double u, Connectivity connectivity,
                           double alpha = 0.05);

inline constexpr const char* cluster_csv_header =
    "cluster_id,extent_voxels,peak_t,peak_x,peak_y,peak_z,p_unc_extent,p_fwe_extent,p_fwe_peak";

void write_cluster_csv(const ClusterTable& table, const std::filesystem::path& path);
void write_cluster_json(const ClusterTable& table, const std::filesystem::path& path);

}  // namespace rftval
