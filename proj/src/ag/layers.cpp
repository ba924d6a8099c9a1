#include "voxmend/ag/layers.hpp"

#include <algorithm>
#include <cmath>

#include "voxmend/error.hpp"

namespace voxmend::ag {
namespace {

template <typename T>
void fill_zero(Tensor<T>& t) {
  if (t.defined()) std::fill(t.storage().begin(), t.storage().end(), T(0));
}

}  // namespace

template <typename T>
Conv2dLayer<T> Conv2dLayer<T>::create(ParamStore<T>& store, const std::string& name, std::size_t cin,
                                      std::size_t cout, std::size_t kt, std::size_t kf, std::mt19937_64& rng,
                                      bool weight_normed) {
  Conv2dLayer l;
  l.cin = cin;
  l.cout = cout;
  l.kt = kt;
  l.kf = kf;
  l.weight_normed = weight_normed;
  const T bound = T(1) / std::sqrt(static_cast<T>(cin * kt * kf));
  if (weight_normed) {
    l.v = store.add_uniform(name + ".v", {cout, cin, kt, kf}, bound, rng);
    std::vector<T> norms(cout);
    const std::size_t fan = cin * kt * kf;
    for (std::size_t o = 0; o < cout; ++o) {
      T ss = T(0);
      for (std::size_t i = 0; i < fan; ++i) ss += l.v.storage()[o * fan + i] * l.v.storage()[o * fan + i];
      norms[o] = std::sqrt(ss);
    }
    l.g = store.add(name + ".g", Tensor<T>({cout}, std::move(norms)));
  } else {
    l.w = store.add_uniform(name + ".w", {cout, cin, kt, kf}, bound, rng);
  }
  l.b = store.add_uniform(name + ".b", {cout}, bound, rng);
  return l;
}

template <typename T>
void Conv2dLayer<T>::zero() {
  if (weight_normed) throw ValidationError("cannot zero a weight-normalised layer");
  fill_zero(w);
  fill_zero(b);
}

template <typename T>
ConvT2dLayer<T> ConvT2dLayer<T>::create(ParamStore<T>& store, const std::string& name, std::size_t cin,
                                        std::size_t cout, std::size_t kt, std::size_t kf, std::size_t stride_f,
                                        std::mt19937_64& rng) {
  ConvT2dLayer l;
  l.cin = cin;
  l.cout = cout;
  l.kt = kt;
  l.kf = kf;
  l.stride_f = stride_f;
  const T bound = T(1) / std::sqrt(static_cast<T>(cin * kt * kf));
  l.w = store.add_uniform(name + ".w", {cin, cout, kt, kf}, bound, rng);
  l.b = store.add_uniform(name + ".b", {cout}, bound, rng);
  return l;
}

template <typename T>
void ConvT2dLayer<T>::zero() {
  fill_zero(w);
  fill_zero(b);
}

template <typename T>
Tensor<T> Timeline<T>::with_history(const Tensor<T>& x, std::size_t frames) {
  const std::size_t slot = cache_->cursor++;
  if (slot >= cache_->slots.size()) {
    Shape s = x.shape();
    s[2] = frames;
    cache_->slots.push_back(Tensor<T>::zeros(s));
  }
  auto& hist = cache_->slots[slot];
  auto joined = concat<T>({hist, x}, 2);
  const std::size_t len = joined.size(2);
  {
    NoGradGuard guard;
    hist = slice(joined, 2, len - frames, len).detach();
  }
  return joined;
}

template <typename T>
Tensor<T> Timeline<T>::conv(const Conv2dLayer<T>& layer, const Tensor<T>& x) {
  Conv2dParams p;
  p.stride_t = 1;
  p.stride_f = layer.stride_f;
  p.pad_f = layer.pad_f();
  p.dilation_t = layer.dilation_t;
  const std::size_t h = layer.history();
  if (!streaming() || h == 0) {
    p.pad_t_before = h;
    return conv2d(x, layer.weight(), layer.b, p);
  }
  return conv2d(with_history(x, h), layer.weight(), layer.b, p);
}

template <typename T>
Tensor<T> Timeline<T>::conv_t(const ConvT2dLayer<T>& layer, const Tensor<T>& x) {
  const std::size_t h = layer.history();
  if (!streaming() || h == 0) return conv_transpose2d(x, layer.w, layer.b, layer.stride_f, layer.pad_f());
  const std::size_t t = x.size(2);
  auto y = conv_transpose2d(with_history(x, h), layer.w, layer.b, layer.stride_f, layer.pad_f());
  return slice(y, 2, h, h + t);
}

template <typename T>
Tensor<T> Timeline<T>::conv1d(const Conv2dLayer<T>& layer, const Tensor<T>& x) {
  if (x.dim() != 3 || layer.kf != 1) throw ShapeError("Timeline::conv1d: expected N x C x T input and kf == 1");
  auto x4 = reshape(x, Shape{x.size(0), x.size(1), x.size(2), 1});
  auto y = conv(layer, x4);
  return reshape(y, Shape{y.size(0), y.size(1), y.size(2)});
}

template struct Conv2dLayer<float>;
template struct Conv2dLayer<double>;
template struct ConvT2dLayer<float>;
template struct ConvT2dLayer<double>;
template class Timeline<float>;
template class Timeline<double>;

}  // namespace voxmend::ag
