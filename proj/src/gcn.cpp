#include "gkg/gcn.hpp"

#include <cmath>
#include <stdexcept>

#include "gkg/errors.hpp"
#include "gkg/ops.hpp"

namespace gkg {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w({fan_in, fan_out});
  for (double& v : w.data()) v = uniform(rng, -bound, bound);
  return w;
}

GroupKgcnParams make_group_kgcn(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t groups,
                                std::size_t k, std::size_t expansion, Rng& rng) {
  if (groups == 0 || width % groups != 0) {
    throw ConfigError(prefix + ": width " + std::to_string(width) + " not divisible by G=" + std::to_string(groups));
  }
  if (k == 0) throw ConfigError(prefix + ": K must be positive");
  if (expansion == 0) throw ConfigError(prefix + ": FFN expansion must be positive");
  const std::size_t hidden = expansion * width;
  GroupKgcnParams p;
  p.width = width;
  p.groups = groups;
  p.k = k;
  p.expansion = expansion;
  p.fuse_w = store.add(prefix + ".fuse.w", glorot_uniform(2 * width, width, rng));
  p.fuse_b = store.add(prefix + ".fuse.b", Tensor({width}));
  p.ffn_w1 = store.add(prefix + ".ffn.w1", glorot_uniform(width, hidden, rng));
  p.ffn_b1 = store.add(prefix + ".ffn.b1", Tensor({hidden}));
  p.ffn_w2 = store.add(prefix + ".ffn.w2", glorot_uniform(hidden, width, rng));
  p.ffn_b2 = store.add(prefix + ".ffn.b2", Tensor({width}));
  return p;
}

Var group_max_relative(Tape& tape, Var dest, Var src, const GroupedKnnGraph& graph) {
  const Tensor& d = tape.value(dest);
  const Tensor& s = tape.value(src);
  const std::size_t nd = d.dim(0), ns = s.dim(0), c = d.dim(1);
  if (s.dim(1) != c || graph.num_dest != nd || graph.num_src != ns || graph.groups == 0 || c % graph.groups != 0) {
    throw std::logic_error("group_max_relative: graph " + std::to_string(graph.num_dest) + "x" +
                           std::to_string(graph.num_src) + " does not match nodes " + shape_string(d.shape()) +
                           " / " + shape_string(s.shape()));
  }
  const std::size_t width = c / graph.groups;
  Tensor out({nd, c});
  // Winning source row per output element.
  std::vector<std::int32_t> winner(nd * c);
  for (std::size_t g = 0; g < graph.groups; ++g) {
    for (std::size_t i = 0; i < nd; ++i) {
      auto nbrs = graph.neighbors(g, i);
      for (std::size_t t = 0; t < width; ++t) {
        const std::size_t col = g * width + t;
        double best = 0.0;
        std::int32_t arg = -1;
        for (std::int32_t j : nbrs) {
          if (j < 0 || static_cast<std::size_t>(j) >= ns) {
            throw std::logic_error("group_max_relative: neighbour index " + std::to_string(j) + " out of range");
          }
          const double rel = d[i * c + col] - s[static_cast<std::size_t>(j) * c + col];
          if (arg < 0 || rel > best) {
            best = rel;
            arg = j;
          }
        }
        out[i * c + col] = best;
        winner[i * c + col] = arg;
      }
    }
  }
  return tape.push(std::move(out), {dest, src}, [dest, src, c, winner = std::move(winner)](Tape& t, const Tensor& g) {
    if (t.requires_grad(dest)) {
      Tensor& gd = t.grad_slot(dest);
      for (std::size_t e = 0; e < g.size(); ++e) gd[e] += g[e];
    }
    if (t.requires_grad(src)) {
      Tensor& gs = t.grad_slot(src);
      for (std::size_t e = 0; e < g.size(); ++e) {
        gs[static_cast<std::size_t>(winner[e]) * c + e % c] -= g[e];
      }
    }
  });
}

KgcnOutput group_kgcn_forward(Tape& tape, const ParamStore& store, const GroupKgcnParams& params,
                              const NodeSet& dest, const NodeSet& src, const GroupedKnnGraph* frozen) {
  const Tensor& dv = tape.value(dest.features);
  if (dv.rank() != 2 || dv.dim(1) != params.width) {
    throw DimensionError("group_kgcn_forward: destination features " + shape_string(dv.shape()) +
                         " do not have width " + std::to_string(params.width));
  }
  GroupedKnnGraph graph = frozen ? *frozen
                                 : group_knn(dv, tape.value(src.features), params.groups, params.k);
  Var relative = group_max_relative(tape, dest.features, src.features, graph);
  Var fused = ops::affine(tape, ops::concat_last_dim(tape, {dest.features, relative}),
                          tape.param(store, params.fuse_w), tape.param(store, params.fuse_b));
  Var hidden_in = ops::add(tape, dest.features, fused);
  Var hidden = ops::gelu(tape, ops::affine(tape, hidden_in, tape.param(store, params.ffn_w1),
                                           tape.param(store, params.ffn_b1)));
  Var ffn = ops::affine(tape, hidden, tape.param(store, params.ffn_w2), tape.param(store, params.ffn_b2));
  Var updated = ops::add(tape, dest.features, ffn);
  return KgcnOutput{NodeSet{updated, dest.kind, dest.grid}, std::move(graph)};
}

KgcnOutput cross_level_update(Tape& tape, const ParamStore& store, const GroupKgcnParams& params,
                              const NodeSet& labels, const NodeSet& patches, const GroupedKnnGraph* frozen) {
  if (labels.kind != NodeKind::label || patches.kind != NodeKind::patch) {
    throw ArgumentError("cross_level_update: expects label destinations and patch sources");
  }
  return group_kgcn_forward(tape, store, params, labels, patches, frozen);
}

}  // namespace gkg
