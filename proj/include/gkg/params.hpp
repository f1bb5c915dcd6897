#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gkg/tensor.hpp"

namespace gkg {

struct ParamId {
  std::size_t index = 0;
  friend bool operator==(ParamId, ParamId) = default;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Named parameters in insertion order. Names are dotted paths such as
// "stage1.patch.0.ffn.w1".
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t rng_seed = 0) : rng_seed_(rng_seed) {}

  ParamId add(std::string name, Tensor value);

  Parameter& operator[](ParamId id) { return params_.at(id.index); }
  const Parameter& operator[](ParamId id) const { return params_.at(id.index); }
  ParamId id(std::string_view name) const;
  std::optional<ParamId> find(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::uint64_t rng_seed() const { return rng_seed_; }

  void zero_grad();
  // Rounds every value through float so that 32-bit checkpoints are lossless.
  void round_values_to_f32();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t rng_seed_;
};

// Gradients detached from a store, one tensor per parameter. Used by worker
// threads that must not write into the shared store.
class GradBuffer {
 public:
  GradBuffer() = default;
  explicit GradBuffer(const ParamStore& store);

  Tensor& operator[](ParamId id) { return grads_.at(id.index); }
  const Tensor& operator[](ParamId id) const { return grads_.at(id.index); }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void add(const GradBuffer& other, double scale = 1.0);
  void add_into(ParamStore& store, double scale = 1.0) const;

 private:
  std::vector<Tensor> grads_;
};

}  // namespace gkg
