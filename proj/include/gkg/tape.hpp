#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "gkg/params.hpp"
#include "gkg/tensor.hpp"

namespace gkg {

// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
  friend bool operator==(Var, Var) = default;
};

// Reverse-mode gradient tape. Nodes are appended in evaluation order, so the
// node list is already a topological order and backward() walks it in reverse.
//
// Backward closures capture input handles and read forward values back from
// the tape; they never hold references into the node vector.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  // Leaf bound to a parameter. The store must outlive the tape and its
  // values must not change while the tape is in use.
  Var param(const ParamStore& store, ParamId id);

  // Records an op output. The closure is kept only when recording and at
  // least one input needs a gradient.
  Var push(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var push(Tensor value, const std::vector<Var>& inputs, Backward backward);

  const Tensor& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.external ? *n.external : n.value;
  }
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient slot for v, zero-initialised on first access. Only valid
  // during backward().
  Tensor& grad_slot(Var v);
  const Tensor* grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and propagates. The loss must hold one value.
  void backward(Var loss);

  void accumulate_into(ParamStore& store) const;
  void accumulate_into(GradBuffer& grads) const;

 private:
  struct Node {
    Tensor value;
    // Parameter leaves alias the store instead of copying it.
    const Tensor* external = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::optional<ParamId> param;
    Backward backward;
  };

  bool record_;
  std::vector<Node> nodes_;
};

// Runs tape.backward(loss) and adds every parameter gradient into store.
void backward(Tape& tape, Var loss, ParamStore& store);

}  // namespace gkg
