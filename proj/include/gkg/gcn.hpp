#pragma once

#include <optional>
#include <string>

#include "gkg/graph.hpp"
#include "gkg/params.hpp"
#include "gkg/random.hpp"
#include "gkg/tape.hpp"

namespace gkg {

// A node set whose features live on a tape.
struct NodeSet {
  Var features;
  NodeKind kind = NodeKind::patch;
  std::optional<Grid> grid;
};

// Parameters of one Group KGCN module:
//   fuse   : [2C -> C] applied to concat(D_i, D'_i1 .. D'_iG)
//   ffn    : [C -> rho*C] -> GELU -> [rho*C -> C]
struct GroupKgcnParams {
  std::size_t width = 0;
  std::size_t groups = 1;
  std::size_t k = 1;
  std::size_t expansion = 4;
  ParamId fuse_w, fuse_b;
  ParamId ffn_w1, ffn_b1;
  ParamId ffn_w2, ffn_b2;
};

// Registers "<prefix>.fuse.w", "<prefix>.ffn.w1", ... in the store with
// uniform(+-sqrt(6 / (fan_in + fan_out))) weights and zero biases.
GroupKgcnParams make_group_kgcn(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t groups,
                                std::size_t k, std::size_t expansion, Rng& rng);

// Glorot-uniform weight [fan_in x fan_out].
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// D'_ig = max_k (D_ig - S_{idx[g][i][k], g}) elementwise. Output is
// [N_D x C]: group g occupies columns [g*C/G, (g+1)*C/G). The graph is a
// constant of the forward pass; only the winning neighbour of each element
// receives gradient (ties to the earliest neighbour in the list).
Var group_max_relative(Tape& tape, Var dest, Var src, const GroupedKnnGraph& graph);

struct KgcnOutput {
  NodeSet nodes;
  GroupedKnnGraph graph;
};

// D~_i = D_i + FFN(D_i + fuse(concat(D_i, {D'_ig}))), with the grouped graph
// built from the current dest/src features. Passing `frozen` reuses a
// previously built graph instead (indices held fixed, e.g. for gradient
// checks).
KgcnOutput group_kgcn_forward(Tape& tape, const ParamStore& store, const GroupKgcnParams& params,
                              const NodeSet& dest, const NodeSet& src, const GroupedKnnGraph* frozen = nullptr);

// Patch -> label message passing: labels are the destinations, patches the
// sources. Patch features are not modified.
KgcnOutput cross_level_update(Tape& tape, const ParamStore& store, const GroupKgcnParams& params,
                              const NodeSet& labels, const NodeSet& patches,
                              const GroupedKnnGraph* frozen = nullptr);

}  // namespace gkg
