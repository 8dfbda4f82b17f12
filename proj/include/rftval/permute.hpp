#pragma once

// Nonparametric max-statistic null distributions over second-level maps:
// sign flips for one group, relabelings that keep group sizes for two.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rftval/cluster.hpp"
#include "rftval/glm.hpp"
#include "rftval/lattice.hpp"

namespace rftval {

enum class MaxStatKind { max_t, max_extent };
enum class PermutationMode { automatic, enumerate, sample };

struct MaxStatNull {
  std::vector<double> samples;  // samples[0] is the identity (observed) statistic
  MaxStatKind kind = MaxStatKind::max_t;
  std::size_t n_permutations = 0;
  std::optional<double> u;  // threshold for max_extent
  std::uint64_t seed = 0;
  bool enumerated = false;

  double observed() const { return samples.front(); }
};

struct PermutationOptions {
  std::size_t n_permutations = 1000;
  std::uint64_t seed = 0;
  PermutationMode mode = PermutationMode::automatic;
  Connectivity connectivity = Connectivity::edges;
};

/// One permutation: sign per subject (sign flips) or group-A membership per
/// subject (relabeling, subjects ordered A then B).
using Permutation = std::vector<std::uint8_t>;

/// Size of the permutation space: 2^n for sign flips, C(n, n_a) otherwise.
/// Saturates at 2^64 - 1.
std::uint64_t permutation_space_size(std::size_t n_subjects, std::optional<std::size_t> group_a_size);

/// Permutations to evaluate, identity first. In automatic mode the whole space
/// is enumerated when it has at most n_permutations elements; otherwise the
/// remaining n_permutations - 1 are drawn uniformly with replacement.
std::vector<Permutation> permutation_set(std::size_t n_subjects, std::optional<std::size_t> group_a_size,
                                         const PermutationOptions& options, bool* enumerated = nullptr);

struct NullRequest {
  bool max_t = true;
  std::vector<double> extent_thresholds;
};

struct NullSet {
  std::optional<MaxStatNull> max_t;
  std::vector<MaxStatNull> max_extent;  // one per requested threshold
};

/// Recomputes the second-level t-map for every permutation and records the
/// requested maxima. An empty group_b selects the one-sample sign-flip test.
NullSet permutation_nulls(const Grid& grid, const Mask& mask, std::span<const double* const> group_a,
                          std::span<const double* const> group_b, const NullRequest& request,
                          const PermutationOptions& options);

MaxStatNull permutation_null(const Grid& grid, const Mask& mask, std::span<const double* const> group_a,
                             std::span<const double* const> group_b, MaxStatKind kind, std::optional<double> u,
                             const PermutationOptions& options);
MaxStatNull permutation_null(std::span<const ContrastMap> group_a, std::span<const ContrastMap> group_b,
                             MaxStatKind kind, std::optional<double> u, const PermutationOptions& options);

/// Add-one estimator, (1 + #{non-identity samples >= observed}) / n_permutations.
double nonparam_p(double observed, const MaxStatNull& null);

void write_null_csv(const MaxStatNull& null, const std::filesystem::path& path);

}  // namespace rftval
