#include "voxmend/ag/params.hpp"

#include <algorithm>

#include "voxmend/error.hpp"

namespace voxmend::ag {

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Tensor<T> value) {
  if (contains(name)) throw ValidationError("duplicate parameter name " + name);
  value.set_requires_grad(true);
  params_.push_back({name, value});
  return value;
}

template <typename T>
Tensor<T> ParamStore<T>::add_uniform(const std::string& name, Shape shape, T bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  std::vector<T> data(numel(shape));
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return add(name, Tensor<T>(std::move(shape), std::move(data)));
}

template <typename T>
Tensor<T> ParamStore<T>::add_constant(const std::string& name, Shape shape, T value) {
  return add(name, Tensor<T>::full(std::move(shape), value));
}

template <typename T>
std::vector<Tensor<T>> ParamStore<T>::tensors() const {
  std::vector<Tensor<T>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ValidationError("no parameter named " + name);
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
}

template <typename T>
std::size_t ParamStore<T>::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

template <typename T>
std::vector<NamedTensor> ParamStore<T>::export_tensors(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (const auto& p : params_) {
    NamedTensor t;
    t.name = prefix + p.name;
    for (auto d : p.value.shape()) t.dims.push_back(static_cast<std::uint32_t>(d));
    t.data.assign(p.value.storage().begin(), p.value.storage().end());
    out.push_back(std::move(t));
  }
  return out;
}

template <typename T>
void ParamStore<T>::import_tensors(const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  for (auto& p : params_) {
    const auto* t = find_tensor(tensors, prefix + p.name);
    if (!t) throw ValidationError("checkpoint is missing parameter " + prefix + p.name);
    Shape dims(t->dims.begin(), t->dims.end());
    if (dims != p.value.shape()) {
      throw ValidationError("checkpoint parameter " + prefix + p.name + " has shape " + to_string(dims) +
                            ", model expects " + to_string(p.value.shape()));
    }
    std::copy(t->data.begin(), t->data.end(), p.value.storage().begin());
  }
}

template <typename To, typename From>
void copy_values(const ParamStore<From>& src, ParamStore<To>& dst) {
  const auto& a = src.params();
  const auto& b = dst.params();
  if (a.size() != b.size()) throw ValidationError("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].value.shape() != b[i].value.shape()) {
      throw ValidationError("copy_values: parameter mismatch at " + a[i].name);
    }
    auto& out = const_cast<Tensor<To>&>(b[i].value).storage();
    std::transform(a[i].value.storage().begin(), a[i].value.storage().end(), out.begin(),
                   [](From v) { return static_cast<To>(v); });
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template void copy_values<double, float>(const ParamStore<float>&, ParamStore<double>&);
template void copy_values<float, double>(const ParamStore<double>&, ParamStore<float>&);
template void copy_values<float, float>(const ParamStore<float>&, ParamStore<float>&);

}  // namespace voxmend::ag
