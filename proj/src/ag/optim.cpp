#include "voxmend/ag/optim.hpp"

#include <cmath>

#include "voxmend/error.hpp"

namespace voxmend::ag {

template <typename T>
void adamw_step(std::span<const Tensor<T>> params, std::span<const std::span<const T>> grads, AdamWState<T>& s) {
  if (params.size() != grads.size()) throw ShapeError("adamw_step: parameter/gradient count mismatch");
  if (s.m.empty()) {
    for (const auto& p : params) {
      s.m.emplace_back(p.numel(), T(0));
      s.v.emplace_back(p.numel(), T(0));
    }
  }
  if (s.m.size() != params.size()) throw ShapeError("adamw_step: optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (s.m[i].size() != params[i].numel()) throw ShapeError("adamw_step: moment shape mismatch");
    if (!grads[i].empty() && grads[i].size() != params[i].numel()) {
      throw ShapeError("adamw_step: gradient shape mismatch for parameter " + std::to_string(i));
    }
  }
  ++s.step;
  const double b1 = s.cfg.beta1, b2 = s.cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.step));
  const double lr = s.cfg.lr, wd = s.cfg.weight_decay, eps = s.cfg.eps;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = const_cast<Tensor<T>&>(params[i]).storage();
    auto& m = s.m[i];
    auto& v = s.v[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g.empty() ? 0.0 : static_cast<double>(g[k]);
      const double mk = b1 * static_cast<double>(m[k]) + (1.0 - b1) * gk;
      const double vk = b2 * static_cast<double>(v[k]) + (1.0 - b2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double pk = static_cast<double>(p[k]);
      const double upd = (mk / c1) / (std::sqrt(vk / c2) + eps) + wd * pk;
      p[k] = static_cast<T>(pk - lr * upd);
    }
  }
}

template <typename T>
void adamw_step(ParamStore<T>& store, AdamWState<T>& state) {
  auto params = store.tensors();
  std::vector<std::span<const T>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    grads.push_back(p.has_grad() ? p.grad() : std::span<const T>{});
  }
  adamw_step<T>(params, grads, state);
  store.zero_grad();
}

template <typename T>
std::vector<NamedTensor> export_optimizer(const ParamStore<T>& store, const AdamWState<T>& state,
                                          const std::string& prefix) {
  std::vector<NamedTensor> out;
  out.push_back(meta_tensor(prefix + "step", static_cast<float>(state.step)));
  if (state.m.empty()) return out;
  const auto& params = store.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<std::uint32_t> dims(params[i].value.shape().begin(), params[i].value.shape().end());
    out.push_back({prefix + "m." + params[i].name, dims, {state.m[i].begin(), state.m[i].end()}});
    out.push_back({prefix + "v." + params[i].name, dims, {state.v[i].begin(), state.v[i].end()}});
  }
  return out;
}

template <typename T>
void import_optimizer(const ParamStore<T>& store, AdamWState<T>& state, const std::vector<NamedTensor>& tensors,
                      const std::string& prefix) {
  state.step = static_cast<std::uint64_t>(meta_value(tensors, prefix + "step"));
  state.m.clear();
  state.v.clear();
  if (state.step == 0) return;
  for (const auto& p : store.params()) {
    const auto* m = find_tensor(tensors, prefix + "m." + p.name);
    const auto* v = find_tensor(tensors, prefix + "v." + p.name);
    if (!m || !v || m->data.size() != p.value.numel() || v->data.size() != p.value.numel()) {
      throw ValidationError("checkpoint optimizer state missing or mis-shaped for " + p.name);
    }
    state.m.emplace_back(m->data.begin(), m->data.end());
    state.v.emplace_back(v->data.begin(), v->data.end());
  }
}

template void adamw_step<float>(std::span<const Tensor<float>>, std::span<const std::span<const float>>,
                                AdamWState<float>&);
template void adamw_step<double>(std::span<const Tensor<double>>, std::span<const std::span<const double>>,
                                 AdamWState<double>&);
template void adamw_step<float>(ParamStore<float>&, AdamWState<float>&);
template void adamw_step<double>(ParamStore<double>&, AdamWState<double>&);
template std::vector<NamedTensor> export_optimizer(const ParamStore<float>&, const AdamWState<float>&,
                                                   const std::string&);
template void import_optimizer(const ParamStore<float>&, AdamWState<float>&, const std::vector<NamedTensor>&,
                               const std::string&);

}  // namespace voxmend::ag
