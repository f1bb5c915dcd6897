#include "gkg/tape.hpp"

#include "gkg/errors.hpp"

namespace gkg {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, false, std::nullopt, {}});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(const ParamStore& store, ParamId id) {
  nodes_.push_back(Node{Tensor(), &store[id].value, {}, false, record_, id, {}});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (Var in : inputs) needs = needs || nodes_.at(in.id).requires_grad;
  needs = needs && record_;
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, needs, std::nullopt, needs ? std::move(backward) : Backward{}});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push(Tensor value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (Var in : inputs) needs = needs || nodes_.at(in.id).requires_grad;
  needs = needs && record_;
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, needs, std::nullopt, needs ? std::move(backward) : Backward{}});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Tensor& Tape::grad_slot(Var v) {
  Node& n = nodes_.at(v.id);
  if (!n.has_grad) {
    n.grad = Tensor((n.external ? *n.external : n.value).shape());
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor* Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.has_grad ? &n.grad : nullptr;
}

void Tape::backward(Var loss) {
  if (!record_) throw ContractError("backward() on a tape that was not recording");
  if (value(loss).size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(value(loss).shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_slot(loss)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::accumulate_into(ParamStore& store) const {
  for (const auto& n : nodes_) {
    if (!n.param || !n.has_grad) continue;
    auto dst = store[*n.param].grad.data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void Tape::accumulate_into(GradBuffer& grads) const {
  for (const auto& n : nodes_) {
    if (!n.param || !n.has_grad) continue;
    auto dst = grads[*n.param].data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void backward(Tape& tape, Var loss, ParamStore& store) {
  tape.backward(loss);
  tape.accumulate_into(store);
}

}  // namespace gkg
