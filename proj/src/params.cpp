#include "gkg/params.hpp"

#include "gkg/errors.hpp"

namespace gkg {

ParamId ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
  Tensor grad(value.shape());
  const std::size_t idx = params_.size();
  index_.emplace(name, idx);
  params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
  return ParamId{idx};
}

std::optional<ParamId> ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return ParamId{it->second};
}

ParamId ParamStore::id(std::string_view name) const {
  auto found = find(name);
  if (!found) throw ArgumentError("unknown parameter '" + std::string(name) + "'");
  return *found;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void ParamStore::round_values_to_f32() {
  for (auto& p : params_) {
    for (double& v : p.value.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

GradBuffer::GradBuffer(const ParamStore& store) {
  grads_.reserve(store.size());
  for (const auto& p : store) grads_.emplace_back(p.value.shape());
}

void GradBuffer::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void GradBuffer::add(const GradBuffer& other, double scale) {
  if (other.grads_.size() != grads_.size()) throw DimensionError("gradient buffers differ in parameter count");
  for (std::size_t p = 0; p < grads_.size(); ++p) {
    auto dst = grads_[p].data();
    auto src = other.grads_[p].data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  }
}

void GradBuffer::add_into(ParamStore& store, double scale) const {
  if (store.size() != grads_.size()) throw DimensionError("gradient buffer does not match parameter store");
  for (std::size_t p = 0; p < grads_.size(); ++p) {
    auto dst = store[ParamId{p}].grad.data();
    auto src = grads_[p].data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  }
}

}  // namespace gkg
