#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "voxmend/ag/ops.hpp"
#include "voxmend/error.hpp"

namespace voxmend::ag {
namespace {

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

template <typename T>
void same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

// Unary op whose derivative can be written from (x, y).
template <typename T, typename F, typename D>
Tensor<T> unary(const char* op, const Tensor<T>& a, F f, D df) {
  std::vector<T> out(a.numel());
  const auto& x = a.storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  ImplPtr<T> ai = a.impl();
  return make_result<T>(op, a.shape(), std::move(out), {ai}, [ai, df](TensorImpl<T>& o) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * df(ai->data[i], o.data[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  same_shape("add", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.storage()[i] + b.storage()[i];
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>("add", a.shape(), std::move(out), {ai, bi}, [ai, bi](TensorImpl<T>& o) {
    for (auto* in : {ai.get(), bi.get()}) {
      if (!in->requires_grad) continue;
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  same_shape("sub", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.storage()[i] - b.storage()[i];
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>("sub", a.shape(), std::move(out), {ai, bi}, [ai, bi](TensorImpl<T>& o) {
    if (ai->requires_grad) {
      auto& g = ai->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (bi->requires_grad) {
      auto& g = bi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.storage()[i] * b.storage()[i];
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>("mul", a.shape(), std::move(out), {ai, bi}, [ai, bi](TensorImpl<T>& o) {
    if (ai->requires_grad) {
      auto& g = ai->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bi->data[i];
    }
    if (bi->requires_grad) {
      auto& g = bi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ai->data[i];
    }
  });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  same_shape("div", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (b.storage()[i] == T(0)) throw NumericalError("div: division by zero");
    out[i] = a.storage()[i] / b.storage()[i];
  }
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>("div", a.shape(), std::move(out), {ai, bi}, [ai, bi](TensorImpl<T>& o) {
    if (ai->requires_grad) {
      auto& g = ai->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / bi->data[i];
    }
    if (bi->requires_grad) {
      auto& g = bi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i] * o.data[i] / bi->data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary<T>("scale", a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  return unary<T>("add_scalar", a, [value](T x) { return x + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  return unary<T>(
      "leaky_relu", a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary<T>(
      "sigmoid", a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary<T>("tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return unary<T>("square", a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  return unary<T>(
      "abs", a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a, T eps) {
  for (const T& v : a.storage()) {
    if (!(v + eps > T(0))) throw NumericalError("log: argument must be positive");
  }
  return unary<T>("log", a, [eps](T x) { return std::log(x + eps); }, [eps](T x, T) { return T(1) / (x + eps); });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  for (const T& v : a.storage()) {
    if (v < T(0)) throw NumericalError("sqrt: negative argument");
  }
  return unary<T>(
      "sqrt", a, [](T x) { return std::sqrt(x); }, [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}

template <typename T>
Tensor<T> pow(const Tensor<T>& a, T e) {
  for (const T& v : a.storage()) {
    if (v < T(0)) throw NumericalError("pow: negative base");
  }
  return unary<T>(
      "pow", a, [e](T x) { return std::pow(x, e); },
      [e](T x, T y) { return x > T(0) ? e * y / x : T(0); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (const T& v : a.storage()) acc += v;
  ImplPtr<T> ai = a.impl();
  return make_result<T>("sum", Shape{}, {acc}, {ai}, [ai](TensorImpl<T>& o) {
    auto& g = ai->ensure_grad();
    for (auto& v : g) v += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  T acc = T(0);
  for (const T& v : a.storage()) acc += v;
  const T n = static_cast<T>(a.numel());
  ImplPtr<T> ai = a.impl();
  return make_result<T>("mean", Shape{}, {acc / n}, {ai}, [ai, n](TensorImpl<T>& o) {
    auto& g = ai->ensure_grad();
    const T d = o.grad[0] / n;
    for (auto& v : g) v += d;
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  ImplPtr<T> ai = a.impl();
  return make_result<T>("reshape", std::move(shape), a.storage(), {ai}, [ai](TensorImpl<T>& o) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& perm) {
  const std::size_t r = a.dim();
  if (perm.size() != r) throw ShapeError("permute: rank mismatch");
  Shape out_shape(r);
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.shape()[i];
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = a.shape().at(perm[i]);
  // Map each output linear index to its input linear index once.
  const std::size_t n = a.numel();
  auto index = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(r, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += counter[i] * in_strides[perm[i]];
    (*index)[o] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++counter[i] < out_shape[i]) break;
      counter[i] = 0;
    }
  }
  std::vector<T> out(n);
  for (std::size_t o = 0; o < n; ++o) out[o] = a.storage()[(*index)[o]];
  ImplPtr<T> ai = a.impl();
  return make_result<T>("permute", std::move(out_shape), std::move(out), {ai}, [ai, index](TensorImpl<T>& o) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[(*index)[i]] += o.grad[i];
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.dim() || begin > end || end > a.shape()[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of " + to_string(a.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (std::size_t i = axis + 1; i < a.dim(); ++i) inner *= a.shape()[i];
  const std::size_t len = a.shape()[axis], width = end - begin;
  Shape shape = a.shape();
  shape[axis] = width;
  std::vector<T> out(outer * width * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.storage().begin() + static_cast<std::ptrdiff_t>((o * len + begin) * inner), width * inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * width * inner));
  }
  ImplPtr<T> ai = a.impl();
  return make_result<T>("slice", std::move(shape), std::move(out), {ai},
                        [ai, outer, inner, len, begin, width](TensorImpl<T>& o) {
                          auto& g = ai->ensure_grad();
                          for (std::size_t q = 0; q < outer; ++q) {
                            const T* src = o.grad.data() + q * width * inner;
                            T* dst = g.data() + (q * len + begin) * inner;
                            for (std::size_t i = 0; i < width * inner; ++i) dst[i] += src[i];
                          }
                        });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != ref.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != ref[i]) {
        throw ShapeError("concat: shape mismatch " + to_string(s) + " vs " + to_string(ref));
      }
    }
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  Shape shape = ref;
  shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  std::vector<ImplPtr<T>> impls;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.storage().begin() + static_cast<std::ptrdiff_t>(o * w * inner), w * inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
    }
    offset += w;
    impls.push_back(p.impl());
    widths.push_back(w);
  }
  auto captured = impls;
  return make_result<T>("concat", std::move(shape), std::move(out), std::move(impls),
                        [captured, widths, outer, inner, total](TensorImpl<T>& o) {
                          std::size_t off = 0;
                          for (std::size_t k = 0; k < captured.size(); ++k) {
                            const std::size_t w = widths[k];
                            if (captured[k]->requires_grad) {
                              auto& g = captured[k]->ensure_grad();
                              for (std::size_t q = 0; q < outer; ++q) {
                                const T* src = o.grad.data() + (q * total + off) * inner;
                                T* dst = g.data() + q * w * inner;
                                for (std::size_t i = 0; i < w * inner; ++i) dst[i] += src[i];
                              }
                            }
                            off += w;
                          }
                        });
}

template <typename T>
Tensor<T> linear_map(const Tensor<T>& a, std::shared_ptr<const std::vector<T>> matrix, std::size_t out_dim) {
  if (a.dim() == 0) throw ShapeError("linear_map: scalar input");
  const std::size_t k = a.shape().back();
  if (matrix->size() != out_dim * k) throw ShapeError("linear_map: matrix shape mismatch");
  const std::size_t rows = a.numel() / k;
  Shape shape = a.shape();
  shape.back() = out_dim;
  std::vector<T> out(rows * out_dim, T(0));
  const auto& m = *matrix;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.storage().data() + r * k;
    T* y = out.data() + r * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) {
      T acc = T(0);
      const T* mj = m.data() + j * k;
      for (std::size_t i = 0; i < k; ++i) acc += mj[i] * x[i];
      y[j] = acc;
    }
  }
  ImplPtr<T> ai = a.impl();
  return make_result<T>("linear_map", std::move(shape), std::move(out), {ai},
                        [ai, matrix, rows, k, out_dim](TensorImpl<T>& o) {
                          auto& g = ai->ensure_grad();
                          const auto& m = *matrix;
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* dy = o.grad.data() + r * out_dim;
                            T* dx = g.data() + r * k;
                            for (std::size_t j = 0; j < out_dim; ++j) {
                              if (dy[j] == T(0)) continue;
                              const T* mj = m.data() + j * k;
                              for (std::size_t i = 0; i < k; ++i) dx[i] += mj[i] * dy[j];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> weight_norm(const Tensor<T>& v, const Tensor<T>& g) {
  if (v.dim() < 1 || g.numel() != v.shape()[0]) throw ShapeError("weight_norm: g must have one entry per output channel");
  const std::size_t out_ch = v.shape()[0];
  const std::size_t fan = v.numel() / out_ch;
  std::vector<T> norms(out_ch);
  std::vector<T> out(v.numel());
  for (std::size_t o = 0; o < out_ch; ++o) {
    T ss = T(0);
    for (std::size_t i = 0; i < fan; ++i) ss += v.storage()[o * fan + i] * v.storage()[o * fan + i];
    if (ss == T(0)) throw NumericalError("weight_norm: zero direction vector");
    norms[o] = std::sqrt(ss);
    for (std::size_t i = 0; i < fan; ++i) out[o * fan + i] = g.storage()[o] * v.storage()[o * fan + i] / norms[o];
  }
  ImplPtr<T> vi = v.impl(), gi = g.impl();
  return make_result<T>("weight_norm", v.shape(), std::move(out), {vi, gi},
                        [vi, gi, norms, out_ch, fan](TensorImpl<T>& o) {
                          for (std::size_t c = 0; c < out_ch; ++c) {
                            const T* dv_out = o.grad.data() + c * fan;
                            const T* vv = vi->data.data() + c * fan;
                            T dot = T(0);
                            for (std::size_t i = 0; i < fan; ++i) dot += dv_out[i] * vv[i];
                            const T n = norms[c];
                            const T gc = gi->data[c];
                            if (gi->requires_grad) gi->ensure_grad()[c] += dot / n;
                            if (vi->requires_grad) {
                              T* dv = vi->ensure_grad().data() + c * fan;
                              for (std::size_t i = 0; i < fan; ++i) {
                                dv[i] += gc / n * dv_out[i] - gc * dot / (n * n * n) * vv[i];
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> complex_abs(const Tensor<T>& z) {
  if (z.dim() == 0 || z.shape().back() != 2) throw ShapeError("complex_abs: trailing axis must be 2");
  Shape shape(z.shape().begin(), z.shape().end() - 1);
  const std::size_t n = z.numel() / 2;
  std::vector<T> out(n);
  const auto& d = z.storage();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(d[2 * i] * d[2 * i] + d[2 * i + 1] * d[2 * i + 1]);
  ImplPtr<T> zi = z.impl();
  return make_result<T>("complex_abs", std::move(shape), std::move(out), {zi}, [zi, n](TensorImpl<T>& o) {
    auto& g = zi->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const T m = o.data[i];
      if (m == T(0)) continue;
      g[2 * i] += o.grad[i] * zi->data[2 * i] / m;
      g[2 * i + 1] += o.grad[i] * zi->data[2 * i + 1] / m;
    }
  });
}

template <typename T>
Tensor<T> complex_power(const Tensor<T>& z, T a, T eps) {
  if (z.dim() == 0 || z.shape().back() != 2) throw ShapeError("complex_power: trailing axis must be 2");
  const std::size_t n = z.numel() / 2;
  std::vector<T> out(z.numel());
  const auto& d = z.storage();
  for (std::size_t i = 0; i < n; ++i) {
    const T m = std::sqrt(d[2 * i] * d[2 * i] + d[2 * i + 1] * d[2 * i + 1]);
    const T f = m > T(0) ? std::pow(m, a) / (m + eps) : T(0);
    out[2 * i] = f * d[2 * i];
    out[2 * i + 1] = f * d[2 * i + 1];
  }
  ImplPtr<T> zi = z.impl();
  return make_result<T>("complex_power", z.shape(), std::move(out), {zi}, [zi, n, a, eps](TensorImpl<T>& o) {
    auto& g = zi->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const T x = zi->data[2 * i], y = zi->data[2 * i + 1];
      const T m = std::sqrt(x * x + y * y);
      if (m == T(0)) continue;
      // out = f(m) * z with f(m) = m^a / (m + eps).
      const T f = std::pow(m, a) / (m + eps);
      const T df = (a * std::pow(m, a - T(1)) * (m + eps) - std::pow(m, a)) / ((m + eps) * (m + eps));
      const T gx = o.grad[2 * i], gy = o.grad[2 * i + 1];
      const T proj = (gx * x + gy * y) * df / m;  // d f / d z via dm/dz = z / m
      g[2 * i] += f * gx + proj * x;
      g[2 * i + 1] += f * gy + proj * y;
    }
  });
}

template <typename T>
Tensor<T> scale_complex(const Tensor<T>& z, const Tensor<T>& g) {
  if (z.dim() == 0 || z.shape().back() != 2) throw ShapeError("scale_complex: trailing axis must be 2");
  if (Shape(z.shape().begin(), z.shape().end() - 1) != g.shape()) {
    throw ShapeError("scale_complex: gain shape " + to_string(g.shape()) + " does not match " + to_string(z.shape()));
  }
  const std::size_t n = g.numel();
  std::vector<T> out(z.numel());
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = z.storage()[2 * i] * g.storage()[i];
    out[2 * i + 1] = z.storage()[2 * i + 1] * g.storage()[i];
  }
  ImplPtr<T> zi = z.impl(), gi = g.impl();
  return make_result<T>("scale_complex", z.shape(), std::move(out), {zi, gi}, [zi, gi, n](TensorImpl<T>& o) {
    if (zi->requires_grad) {
      auto& dz = zi->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        dz[2 * i] += o.grad[2 * i] * gi->data[i];
        dz[2 * i + 1] += o.grad[2 * i + 1] * gi->data[i];
      }
    }
    if (gi->requires_grad) {
      auto& dg = gi->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        dg[i] += o.grad[2 * i] * zi->data[2 * i] + o.grad[2 * i + 1] * zi->data[2 * i + 1];
      }
    }
  });
}

#define VOXMEND_INSTANTIATE(T)                                                                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> scale(const Tensor<T>&, T);                                                     \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                      \
  template Tensor<T> tanh(const Tensor<T>&);                                                         \
  template Tensor<T> square(const Tensor<T>&);                                                       \
  template Tensor<T> abs(const Tensor<T>&);                                                          \
  template Tensor<T> log(const Tensor<T>&, T);                                                       \
  template Tensor<T> sqrt(const Tensor<T>&);                                                         \
  template Tensor<T> pow(const Tensor<T>&, T);                                                       \
  template Tensor<T> sum(const Tensor<T>&);                                                          \
  template Tensor<T> mean(const Tensor<T>&);                                                         \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                               \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                     \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                 \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                             \
  template Tensor<T> linear_map(const Tensor<T>&, std::shared_ptr<const std::vector<T>>, std::size_t); \
  template Tensor<T> weight_norm(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> complex_abs(const Tensor<T>&);                                                  \
  template Tensor<T> complex_power(const Tensor<T>&, T, T);                                          \
  template Tensor<T> scale_complex(const Tensor<T>&, const Tensor<T>&);

VOXMEND_INSTANTIATE(float)
VOXMEND_INSTANTIATE(double)

}  // namespace voxmend::ag
