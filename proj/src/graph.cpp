#include "gkg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gkg/errors.hpp"

namespace gkg {
namespace {

constexpr double kNormEps = 1e-12;

void check_features(const Tensor& dest, const Tensor& src) {
  if (dest.rank() != 2 || src.rank() != 2) {
    throw DimensionError("knn: node features must be rank 2, got " + shape_string(dest.shape()) + " and " +
                         shape_string(src.shape()));
  }
  if (dest.dim(1) != src.dim(1)) {
    throw DimensionError("knn: feature widths differ: " + shape_string(dest.shape()) + " vs " +
                         shape_string(src.shape()));
  }
}

// Copies columns [offset, offset + width) of every row and scales each row
// to unit length (rows shorter than eps are divided by eps). Each element is
// divided by the norm exactly as knn_indices does, so both paths produce
// bit-identical similarities and agree on ties.
std::vector<double> normalized_slice(const Tensor& x, std::size_t offset, std::size_t width) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  std::vector<double> out(n * width);
  for (std::size_t r = 0; r < n; ++r) {
    const double* src = x.ptr() + r * c + offset;
    double sq = 0.0;
    for (std::size_t j = 0; j < width; ++j) sq += src[j] * src[j];
    const double norm = std::max(std::sqrt(sq), kNormEps);
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = src[j] / norm;
  }
  return out;
}

}  // namespace

IndexTable knn_indices(const Tensor& dest, const Tensor& src, std::size_t k) {
  check_features(dest, src);
  const std::size_t nd = dest.dim(0), ns = src.dim(0), c = dest.dim(1);
  if (k == 0) throw ArgumentError("knn_indices: k must be positive");
  if (k > ns) throw ArgumentError("knn_indices: k=" + std::to_string(k) + " exceeds source count " + std::to_string(ns));

  IndexTable table{nd, k, std::vector<std::int32_t>(nd * k)};
  std::vector<double> sims(ns);
  for (std::size_t i = 0; i < nd; ++i) {
    double dn = 0.0;
    for (std::size_t j = 0; j < c; ++j) dn += dest(i, j) * dest(i, j);
    dn = std::max(std::sqrt(dn), kNormEps);
    for (std::size_t s = 0; s < ns; ++s) {
      double sn = 0.0, dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        sn += src(s, j) * src(s, j);
      }
      sn = std::max(std::sqrt(sn), kNormEps);
      for (std::size_t j = 0; j < c; ++j) dot += (dest(i, j) / dn) * (src(s, j) / sn);
      sims[s] = dot;
    }
    // Selection by repeated scan: take the best unused candidate k times.
    std::vector<bool> used(ns, false);
    for (std::size_t slot = 0; slot < k; ++slot) {
      std::size_t best = ns;
      for (std::size_t s = 0; s < ns; ++s) {
        if (used[s]) continue;
        if (best == ns || sims[s] > sims[best]) best = s;
      }
      used[best] = true;
      table.indices[i * k + slot] = static_cast<std::int32_t>(best);
    }
  }
  return table;
}

GroupedKnnGraph group_knn(const Tensor& dest, const Tensor& src, std::size_t groups, std::size_t k) {
  check_features(dest, src);
  const std::size_t nd = dest.dim(0), ns = src.dim(0), c = dest.dim(1);
  if (groups == 0) throw ArgumentError("group_knn: group count must be positive");
  if (c % groups != 0) {
    throw ArgumentError("group_knn: feature width " + std::to_string(c) + " not divisible by G=" +
                        std::to_string(groups));
  }
  if (k == 0) throw ArgumentError("group_knn: K must be positive");
  if (ns == 0) throw ArgumentError("group_knn: empty source set");

  const std::size_t width = c / groups;
  const std::size_t kk = std::min(k, ns);
  GroupedKnnGraph graph;
  graph.groups = groups;
  graph.k = kk;
  graph.num_dest = nd;
  graph.num_src = ns;
  graph.indices.resize(groups * nd * kk);

  std::vector<double> sims(ns);
  std::vector<std::int32_t> top(kk);
  for (std::size_t g = 0; g < groups; ++g) {
    const auto d = normalized_slice(dest, g * width, width);
    const auto s = normalized_slice(src, g * width, width);
    // Source slice transposed to [width x N_S] so similarities of one
    // destination against all sources accumulate contiguously.
    std::vector<double> st(width * ns);
    for (std::size_t j = 0; j < ns; ++j)
      for (std::size_t t = 0; t < width; ++t) st[t * ns + j] = s[j * width + t];
    for (std::size_t i = 0; i < nd; ++i) {
      const double* drow = d.data() + i * width;
      std::fill(sims.begin(), sims.end(), 0.0);
      for (std::size_t t = 0; t < width; ++t) {
        const double dv = drow[t];
        const double* col = st.data() + t * ns;
        for (std::size_t j = 0; j < ns; ++j) sims[j] += dv * col[j];
      }
      graph.sim_multiply_count += static_cast<std::uint64_t>(ns) * width;
      // Insertion into a sorted top-k list. Candidates arrive in ascending
      // index order, so a strict comparison keeps the lower index on ties.
      std::size_t filled = 0;
      for (std::size_t j = 0; j < ns; ++j) {
        const double v = sims[j];
        if (filled == kk && !(v > sims[static_cast<std::size_t>(top[kk - 1])])) continue;
        std::size_t pos = filled < kk ? filled++ : kk - 1;
        while (pos > 0 && v > sims[static_cast<std::size_t>(top[pos - 1])]) {
          top[pos] = top[pos - 1];
          --pos;
        }
        top[pos] = static_cast<std::int32_t>(j);
      }
      std::copy(top.begin(), top.end(), graph.neighbors(g, i).begin());
    }
  }
  return graph;
}

std::size_t neighbor_union_size(const GroupedKnnGraph& graph, std::size_t i) {
  if (i >= graph.num_dest) throw ArgumentError("neighbor_union_size: destination index out of range");
  std::vector<std::int32_t> all;
  all.reserve(graph.groups * graph.k);
  for (std::size_t g = 0; g < graph.groups; ++g) {
    auto row = graph.neighbors(g, i);
    all.insert(all.end(), row.begin(), row.end());
  }
  std::sort(all.begin(), all.end());
  return static_cast<std::size_t>(std::unique(all.begin(), all.end()) - all.begin());
}

}  // namespace gkg
