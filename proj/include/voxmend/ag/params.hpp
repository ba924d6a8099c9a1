#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "voxmend/ag/tensor.hpp"
#include "voxmend/checkpoint.hpp"

namespace voxmend::ag {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
};

// Ordered, named set of trainable tensors. Layers keep handles that alias
// the entries here, so updating a parameter in place is seen everywhere.
template <typename T>
class ParamStore {
 public:
  // Uniform(-bound, bound) initialisation.
  Tensor<T> add_uniform(const std::string& name, Shape shape, T bound, std::mt19937_64& rng);
  Tensor<T> add_constant(const std::string& name, Shape shape, T value);
  Tensor<T> add(const std::string& name, Tensor<T> value);

  const std::vector<Param<T>>& params() const { return params_; }
  std::vector<Tensor<T>> tensors() const;
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t count() const;  // total trainable scalars
  void zero_grad();

  std::vector<NamedTensor> export_tensors(const std::string& prefix = "") const;
  // Copies values from `tensors` (matched by prefix + name). Missing or
  // mis-shaped entries raise ValidationError.
  void import_tensors(const std::vector<NamedTensor>& tensors, const std::string& prefix = "");

 private:
  std::vector<Param<T>> params_;
};

// Converts a parameter store between precisions (same names, same order).
template <typename To, typename From>
void copy_values(const ParamStore<From>& src, ParamStore<To>& dst);

}  // namespace voxmend::ag
