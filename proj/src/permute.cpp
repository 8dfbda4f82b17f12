#include "rftval/permute.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "rftval/error.hpp"
#include "rftval/seed.hpp"

namespace rftval {
namespace {

constexpr std::uint64_t saturated = std::numeric_limits<std::uint64_t>::max();

Permutation identity(std::size_t n, std::optional<std::size_t> na) {
  if (!na) return Permutation(n, 1);
  Permutation p(n, 0);
  std::fill(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(*na), 1);
  return p;
}

// All permutations in a fixed order that starts with the identity.
std::vector<Permutation> enumerate_all(std::size_t n, std::optional<std::size_t> na) {
  std::vector<Permutation> out;
  if (!na) {
    // Binary counting where bit j set means subject j is flipped.
    const std::uint64_t count = std::uint64_t{1} << n;
    for (std::uint64_t code = 0; code < count; ++code) {
      Permutation p(n);
      for (std::size_t j = 0; j < n; ++j) p[j] = (code >> j) & 1u ? 0 : 1;
      out.push_back(std::move(p));
    }
    return out;
  }
  // Combinations of group-A members in lexicographic order.
  std::vector<std::size_t> idx(*na);
  for (std::size_t i = 0; i < *na; ++i) idx[i] = i;
  for (;;) {
    Permutation p(n, 0);
    for (std::size_t i : idx) p[i] = 1;
    out.push_back(std::move(p));
    std::size_t i = *na;
    while (i > 0 && idx[i - 1] == n - *na + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < *na; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

Permutation draw(std::size_t n, std::optional<std::size_t> na, Engine& engine) {
  if (!na) {
    Permutation p(n);
    std::uniform_int_distribution<int> coin(0, 1);
    for (auto& s : p) s = static_cast<std::uint8_t>(coin(engine));
    return p;
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < *na; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(engine)]);
  }
  Permutation p(n, 0);
  for (std::size_t i = 0; i < *na; ++i) p[order[i]] = 1;
  return p;
}

// Per-voxel sufficient statistics so each permutation costs one weighted sum.
class PermutationStatistic {
 public:
  PermutationStatistic(const Grid& grid, const Mask& mask, std::span<const double* const> a,
                       std::span<const double* const> b)
      : grid_(grid), mask_(mask), n_(a.size() + b.size()), na_(a.size()), two_sample_(!b.empty()) {
    const std::size_t nv = grid.size();
    data_.assign(n_ * nv, 0.0);
    sum_sq_.assign(nv, 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      const double* src = j < a.size() ? a[j] : b[j - a.size()];
      std::copy(src, src + nv, data_.begin() + static_cast<std::ptrdiff_t>(j * nv));
    }
    if (two_sample_) {
      // The two-sample t is invariant to a common shift; centring removes the
      // grand mean and keeps the sum-of-squares identity well conditioned.
      for (std::size_t v = 0; v < nv; ++v) {
        double s = 0.0;
        for (std::size_t j = 0; j < n_; ++j) s += data_[j * nv + v];
        const double mean = s / static_cast<double>(n_);
        for (std::size_t j = 0; j < n_; ++j) data_[j * nv + v] -= mean;
      }
    }
    for (std::size_t j = 0; j < n_; ++j)
      for (std::size_t v = 0; v < nv; ++v) sum_sq_[v] += data_[j * nv + v] * data_[j * nv + v];
    acc_.assign(nv, 0.0);
  }

  void compute(const Permutation& p, std::vector<double>& t) {
    const std::size_t nv = grid_.size();
    std::fill(acc_.begin(), acc_.end(), 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      const double* row = data_.data() + j * nv;
      if (two_sample_) {
        if (!p[j]) continue;
        for (std::size_t v = 0; v < nv; ++v) acc_[v] += row[v];
      } else if (p[j]) {
        for (std::size_t v = 0; v < nv; ++v) acc_[v] += row[v];
      } else {
        for (std::size_t v = 0; v < nv; ++v) acc_[v] -= row[v];
      }
    }
    t.assign(nv, 0.0);
    const double n = static_cast<double>(n_);
    if (two_sample_) {
      const double na = static_cast<double>(na_), nb = n - na;
      const double df = n - 2.0;
      const double scale = 1.0 / na + 1.0 / nb;
      for (std::size_t v = 0; v < nv; ++v) {
        if (!mask_[v]) continue;
        const double a = acc_[v];  // group-A sum; group B sums to -a
        const double ss = sum_sq_[v] - a * a / na - a * a / nb;
        if (!(ss > 0.0)) fail(ErrorKind::degenerate_variance, "zero pooled variance under permutation");
        t[v] = (a / na + a / nb) / std::sqrt(ss / df * scale);
      }
    } else {
      for (std::size_t v = 0; v < nv; ++v) {
        if (!mask_[v]) continue;
        const double mean = acc_[v] / n;
        const double ss = sum_sq_[v] - acc_[v] * mean;
        if (!(ss > 0.0)) fail(ErrorKind::degenerate_variance, "zero variance under sign flip");
        t[v] = mean / std::sqrt(ss / (n - 1.0) / n);
      }
    }
  }

 private:
  const Grid& grid_;
  const Mask& mask_;
  std::size_t n_, na_;
  bool two_sample_;
  std::vector<double> data_;
  std::vector<double> sum_sq_;
  std::vector<double> acc_;
};

}  // namespace

std::uint64_t permutation_space_size(std::size_t n, std::optional<std::size_t> na) {
  if (!na) return n >= 64 ? saturated : (std::uint64_t{1} << n);
  std::size_t k = std::min(*na, n - *na);
  long double c = 1.0L;
  for (std::size_t i = 1; i <= k; ++i) {
    c = c * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    if (c >= static_cast<long double>(saturated)) return saturated;
  }
  return static_cast<std::uint64_t>(std::llround(c));
}

std::vector<Permutation> permutation_set(std::size_t n, std::optional<std::size_t> na,
                                         const PermutationOptions& options, bool* enumerated) {
  require(options.n_permutations >= 1, "n_permutations must be >= 1");
  if (na) require(*na <= n, "group A cannot exceed the subject count");
  const std::uint64_t space = permutation_space_size(n, na);
  bool enumerate = options.mode == PermutationMode::enumerate ||
                   (options.mode == PermutationMode::automatic && space <= options.n_permutations);
  if (enumerate && space > 1'000'000)
    fail(ErrorKind::invalid_argument, "permutation space too large to enumerate");
  if (enumerated) *enumerated = enumerate;
  if (enumerate) return enumerate_all(n, na);

  // Uniform sampling with replacement; the identity always occupies slot 0.
  std::vector<Permutation> out{identity(n, na)};
  for (std::size_t i = 1; i < options.n_permutations; ++i) {
    Engine engine(mix_seed(options.seed, {stream::permutation, i}));
    out.push_back(draw(n, na, engine));
  }
  return out;
}

NullSet permutation_nulls(const Grid& grid, const Mask& mask, std::span<const double* const> group_a,
                          std::span<const double* const> group_b, const NullRequest& request,
                          const PermutationOptions& options) {
  require(mask.size() == grid.size(), "mask size does not match grid");
  if (group_a.size() < 2 || (!group_b.empty() && group_b.size() < 2))
    fail(ErrorKind::insufficient_data, "permutation tests need at least 2 subjects per group");
  for (double u : request.extent_thresholds) require(std::isfinite(u), "extent threshold must be finite");

  const std::size_t n = group_a.size() + group_b.size();
  const std::optional<std::size_t> na = group_b.empty() ? std::nullopt : std::optional(group_a.size());
  bool enumerated = false;
  const auto perms = permutation_set(n, na, options, &enumerated);

  NullSet out;
  auto make = [&](MaxStatKind kind, std::optional<double> u) {
    MaxStatNull null;
    null.kind = kind;
    null.u = u;
    null.seed = options.seed;
    null.enumerated = enumerated;
    null.n_permutations = perms.size();
    null.samples.reserve(perms.size());
    return null;
  };
  if (request.max_t) out.max_t = make(MaxStatKind::max_t, std::nullopt);
  for (double u : request.extent_thresholds) out.max_extent.push_back(make(MaxStatKind::max_extent, u));

  PermutationStatistic stat(grid, mask, group_a, group_b);
  std::vector<double> t;
  for (const auto& p : perms) {
    stat.compute(p, t);
    if (out.max_t) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < t.size(); ++v)
        if (mask[v]) best = std::max(best, t[v]);
      out.max_t->samples.push_back(best);
    }
    for (auto& null : out.max_extent)
      null.samples.push_back(
          static_cast<double>(label_clusters(grid, mask, t, *null.u, options.connectivity).max_extent()));
  }
  return out;
}

MaxStatNull permutation_null(const Grid& grid, const Mask& mask, std::span<const double* const> group_a,
                             std::span<const double* const> group_b, MaxStatKind kind, std::optional<double> u,
                             const PermutationOptions& options) {
  NullRequest request;
  request.max_t = kind == MaxStatKind::max_t;
  if (kind == MaxStatKind::max_extent) {
    if (!u) fail(ErrorKind::invalid_argument, "max_extent nulls need a cluster-forming threshold");
    request.extent_thresholds.push_back(*u);
  }
  auto set = permutation_nulls(grid, mask, group_a, group_b, request, options);
  return kind == MaxStatKind::max_t ? std::move(*set.max_t) : std::move(set.max_extent.front());
}

MaxStatNull permutation_null(std::span<const ContrastMap> group_a, std::span<const ContrastMap> group_b,
                             MaxStatKind kind, std::optional<double> u, const PermutationOptions& options) {
  if (group_a.empty()) fail(ErrorKind::insufficient_data, "permutation tests need subjects");
  const Grid& grid = group_a.front().grid;
  std::vector<const double*> a, b;
  for (const auto& m : group_a) {
    require(m.grid == grid, "all contrast maps must share one grid");
    a.push_back(m.contrast_estimate.data());
  }
  for (const auto& m : group_b) {
    require(m.grid == grid, "all contrast maps must share one grid");
    b.push_back(m.contrast_estimate.data());
  }
  return permutation_null(grid, group_a.front().mask, a, b, kind, u, options);
}

double nonparam_p(double observed, const MaxStatNull& null) {
  require(!null.samples.empty(), "empty null distribution");
  std::size_t count = 0;
  for (std::size_t i = 1; i < null.samples.size(); ++i)
    if (null.samples[i] >= observed) ++count;
  return static_cast<double>(1 + count) / static_cast<double>(null.samples.size());
}

void write_null_csv(const MaxStatNull& null, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io_error, "cannot open " + path.string());
  out.precision(17);
  out << "permutation," << (null.kind == MaxStatKind::max_t ? "max_t" : "max_extent") << '\n';
  for (std::size_t i = 0; i < null.samples.size(); ++i) out << i << ',' << null.samples[i] << '\n';
  if (!out) fail(ErrorKind::io_error, "write failed: " + path.string());
}

}  // namespace rftval
