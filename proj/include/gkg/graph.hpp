#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gkg/tensor.hpp"

namespace gkg {

enum class NodeKind { patch, label };

// Spatial arrangement of patch nodes, row-major.
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t size() const { return height * width; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

// Row-major [N_D][k] neighbour table.
struct IndexTable {
  std::size_t rows = 0;
  std::size_t k = 0;
  std::vector<std::int32_t> indices;

  std::span<const std::int32_t> row(std::size_t i) const { return {indices.data() + i * k, k}; }
};

// Per-group neighbour lists. idx[g][i] lists the k sources chosen by the
// i-th destination in feature group g, best first (descending cosine
// similarity, ties to the lower source index).
struct GroupedKnnGraph {
  std::size_t groups = 0;
  std::size_t k = 0;
  std::size_t num_dest = 0;
  std::size_t num_src = 0;
  std::vector<std::int32_t> indices;
  std::uint64_t sim_multiply_count = 0;

  std::span<const std::int32_t> neighbors(std::size_t g, std::size_t i) const {
    return {indices.data() + (g * num_dest + i) * k, k};
  }
  std::span<std::int32_t> neighbors(std::size_t g, std::size_t i) {
    return {indices.data() + (g * num_dest + i) * k, k};
  }
};

// Brute-force cosine top-k. Straight loops, no shared code with group_knn;
// serves as the reference for the G = 1 case.
IndexTable knn_indices(const Tensor& dest, const Tensor& src, std::size_t k);

// Splits the feature axis into `groups` contiguous slices and runs cosine
// top-k independently per slice. k is clamped to min(k, N_S).
GroupedKnnGraph group_knn(const Tensor& dest, const Tensor& src, std::size_t groups, std::size_t k);

// Number of distinct sources reached by destination i across all groups.
std::size_t neighbor_union_size(const GroupedKnnGraph& graph, std::size_t i);

}  // namespace gkg
