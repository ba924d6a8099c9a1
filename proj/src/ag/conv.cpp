#include <Eigen/Core>
#include <algorithm>
#include <string>

#include "voxmend/ag/ops.hpp"
#include "voxmend/error.hpp"

namespace voxmend::ag {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using CMapM = Eigen::Map<const Mat<T>>;

// Geometry of a forward conv2d on a C x T x F input.
struct Geom {
  std::size_t c, t, f, kt, kf;
  std::size_t st, sf, pb, pa, pf, dil;
  std::size_t to, fo;

  std::size_t rows() const { return c * kt * kf; }
  std::size_t cols() const { return to * fo; }
};

Geom make_geom(std::size_t c, std::size_t t, std::size_t f, std::size_t kt, std::size_t kf, const Conv2dParams& p) {
  Geom g{c, t, f, kt, kf, p.stride_t, p.stride_f, p.pad_t_before, p.pad_t_after, p.pad_f, p.dilation_t, 0, 0};
  if (g.st == 0 || g.sf == 0 || g.dil == 0) throw ShapeError("conv: strides and dilation must be positive");
  const std::size_t tp = t + g.pb + g.pa, fp = f + 2 * g.pf;
  const std::size_t span_t = g.dil * (kt - 1) + 1;
  if (tp < span_t || fp < kf) {
    throw ShapeError("conv: kernel " + std::to_string(kt) + "x" + std::to_string(kf) + " larger than padded input " +
                     std::to_string(tp) + "x" + std::to_string(fp));
  }
  g.to = (tp - span_t) / g.st + 1;
  g.fo = (fp - kf) / g.sf + 1;
  return g;
}

// Output positions fo whose input index fo*sf + j - pf falls inside [0, f).
struct FreqRange {
  std::size_t lo, hi;
};

inline FreqRange valid_range(const Geom& g, std::size_t j) {
  const std::ptrdiff_t sf = static_cast<std::ptrdiff_t>(g.sf), off = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pf);
  const std::ptrdiff_t f = static_cast<std::ptrdiff_t>(g.f), fo = static_cast<std::ptrdiff_t>(g.fo);
  std::ptrdiff_t lo = off >= 0 ? 0 : (-off + sf - 1) / sf;
  std::ptrdiff_t hi = f - off <= 0 ? 0 : (f - off - 1) / sf + 1;
  lo = std::min(lo, fo);
  hi = std::clamp(hi, lo, fo);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <typename T>
void im2col(const T* x, const Geom& g, T* col) {
  const std::size_t n_cols = g.cols();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kt; ++i) {
      for (std::size_t j = 0; j < g.kf; ++j) {
        T* row = col + ((c * g.kt + i) * g.kf + j) * n_cols;
        const auto [lo, hi] = valid_range(g, j);
        for (std::size_t to = 0; to < g.to; ++to) {
          const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(to * g.st + i * g.dil) - static_cast<std::ptrdiff_t>(g.pb);
          T* dst = row + to * g.fo;
          if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(g.t)) {
            std::fill(dst, dst + g.fo, T(0));
            continue;
          }
          const std::ptrdiff_t base = static_cast<std::ptrdiff_t>((c * g.t + static_cast<std::size_t>(ti)) * g.f + j) -
                                      static_cast<std::ptrdiff_t>(g.pf);
          std::fill(dst, dst + lo, T(0));
          if (g.sf == 1) {
            std::copy(x + base + static_cast<std::ptrdiff_t>(lo), x + base + static_cast<std::ptrdiff_t>(hi), dst + lo);
          } else {
            for (std::size_t fo = lo; fo < hi; ++fo) dst[fo] = x[base + static_cast<std::ptrdiff_t>(fo * g.sf)];
          }
          std::fill(dst + hi, dst + g.fo, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back onto the input grid.
template <typename T>
void col2im(const T* col, const Geom& g, T* x) {
  const std::size_t n_cols = g.cols();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kt; ++i) {
      for (std::size_t j = 0; j < g.kf; ++j) {
        const T* row = col + ((c * g.kt + i) * g.kf + j) * n_cols;
        const auto [lo, hi] = valid_range(g, j);
        for (std::size_t to = 0; to < g.to; ++to) {
          const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(to * g.st + i * g.dil) - static_cast<std::ptrdiff_t>(g.pb);
          if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(g.t)) continue;
          const T* src = row + to * g.fo;
          const std::ptrdiff_t base = static_cast<std::ptrdiff_t>((c * g.t + static_cast<std::size_t>(ti)) * g.f + j) -
                                      static_cast<std::ptrdiff_t>(g.pf);
          for (std::size_t fo = lo; fo < hi; ++fo) x[base + static_cast<std::ptrdiff_t>(fo * g.sf)] += src[fo];
        }
      }
    }
  }
}

template <typename T>
void check_bias(const Tensor<T>& bias, std::size_t channels, const char* op) {
  if (bias.defined() && (bias.dim() != 1 || bias.size(0) != channels)) {
    throw ShapeError(std::string(op) + ": bias must have " + std::to_string(channels) + " entries, got " +
                     to_string(bias.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const Conv2dParams& p) {
  if (x.dim() != 4 || w.dim() != 4) throw ShapeError("conv2d: expected 4-d input and kernel");
  if (w.size(1) != x.size(1)) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(w.size(1)) + " channels, input has " +
                     std::to_string(x.size(1)));
  }
  const std::size_t n = x.size(0), o = w.size(0);
  check_bias(bias, o, "conv2d");
  const Geom g = make_geom(x.size(1), x.size(2), x.size(3), w.size(2), w.size(3), p);
  const std::size_t in_sz = g.c * g.t * g.f, out_sz = o * g.cols();
  std::vector<T> out(n * out_sz);
  Mat<T> col(g.rows(), g.cols());
  CMapM<T> wm(w.storage().data(), o, g.rows());
  for (std::size_t b = 0; b < n; ++b) {
    im2col(x.storage().data() + b * in_sz, g, col.data());
    MapM<T> om(out.data() + b * out_sz, o, g.cols());
    om.noalias() = wm * col;
    if (bias.defined()) {
      for (std::size_t k = 0; k < o; ++k) om.row(k).array() += bias.storage()[k];
    }
  }
  auto xi = x.impl(), wi = w.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs{xi, wi};
  if (bi) inputs.push_back(bi);
  return make_result<T>("conv2d", Shape{n, o, g.to, g.fo}, std::move(out), std::move(inputs),
                        [xi, wi, bi, g, n, o, in_sz, out_sz](TensorImpl<T>& r) {
                          Mat<T> col(g.rows(), g.cols());
                          CMapM<T> wm(wi->data.data(), o, g.rows());
                          for (std::size_t b = 0; b < n; ++b) {
                            CMapM<T> dy(r.grad.data() + b * out_sz, o, g.cols());
                            if (wi->requires_grad) {
                              im2col(xi->data.data() + b * in_sz, g, col.data());
                              MapM<T> dw(wi->ensure_grad().data(), o, g.rows());
                              dw.noalias() += dy * col.transpose();
                            }
                            if (xi->requires_grad) {
                              col.noalias() = wm.transpose() * dy;
                              col2im(col.data(), g, xi->ensure_grad().data() + b * in_sz);
                            }
                            if (bi && bi->requires_grad) {
                              auto& db = bi->ensure_grad();
                              for (std::size_t k = 0; k < o; ++k) db[k] += dy.row(k).sum();
                            }
                          }
                        });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride_f,
                           std::size_t pad_f) {
  if (x.dim() != 4 || w.dim() != 4) throw ShapeError("conv_transpose2d: expected 4-d input and kernel");
  if (w.size(0) != x.size(1)) {
    throw ShapeError("conv_transpose2d: kernel expects " + std::to_string(w.size(0)) + " channels, input has " +
                     std::to_string(x.size(1)));
  }
  const std::size_t n = x.size(0), cin = x.size(1), t = x.size(2), f = x.size(3);
  const std::size_t cout = w.size(1), kt = w.size(2), kf = w.size(3);
  check_bias(bias, cout, "conv_transpose2d");
  // The forward conv this op is the adjoint of: Cout x T x (F*sf) -> Cin x T x F,
  // padded after in time so the transpose only looks backwards.
  Conv2dParams fp;
  fp.stride_f = stride_f;
  fp.pad_f = pad_f;
  fp.pad_t_after = kt - 1;
  const Geom g = make_geom(cout, t, f * stride_f, kt, kf, fp);
  if (g.to != t || g.fo != f) {
    throw ShapeError("conv_transpose2d: kernel width " + std::to_string(kf) + " with stride " +
                     std::to_string(stride_f) + " and padding " + std::to_string(pad_f) + " does not map " +
                     std::to_string(f) + " bins onto " + std::to_string(f * stride_f));
  }
  const std::size_t in_sz = cin * t * f, out_sz = cout * t * f * stride_f;
  std::vector<T> out(n * out_sz, T(0));
  Mat<T> col(g.rows(), g.cols());
  CMapM<T> wm(w.storage().data(), cin, g.rows());
  for (std::size_t b = 0; b < n; ++b) {
    CMapM<T> xm(x.storage().data() + b * in_sz, cin, g.cols());
    col.noalias() = wm.transpose() * xm;
    T* ob = out.data() + b * out_sz;
    col2im(col.data(), g, ob);
    if (bias.defined()) {
      const std::size_t plane = t * f * stride_f;
      for (std::size_t k = 0; k < cout; ++k) {
        for (std::size_t i = 0; i < plane; ++i) ob[k * plane + i] += bias.storage()[k];
      }
    }
  }
  auto xi = x.impl(), wi = w.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs{xi, wi};
  if (bi) inputs.push_back(bi);
  return make_result<T>("conv_transpose2d", Shape{n, cout, t, f * stride_f}, std::move(out), std::move(inputs),
                        [xi, wi, bi, g, n, cin, cout, in_sz, out_sz](TensorImpl<T>& r) {
                          Mat<T> col(g.rows(), g.cols());
                          CMapM<T> wm(wi->data.data(), cin, g.rows());
                          for (std::size_t b = 0; b < n; ++b) {
                            im2col(r.grad.data() + b * out_sz, g, col.data());
                            if (xi->requires_grad) {
                              MapM<T> dx(xi->ensure_grad().data() + b * in_sz, cin, g.cols());
                              dx.noalias() += wm * col;
                            }
                            if (wi->requires_grad) {
                              CMapM<T> xm(xi->data.data() + b * in_sz, cin, g.cols());
                              MapM<T> dw(wi->ensure_grad().data(), cin, g.rows());
                              dw.noalias() += xm * col.transpose();
                            }
                            if (bi && bi->requires_grad) {
                              auto& db = bi->ensure_grad();
                              const std::size_t plane = out_sz / cout;
                              const T* gy = r.grad.data() + b * out_sz;
                              for (std::size_t k = 0; k < cout; ++k) {
                                T acc = T(0);
                                for (std::size_t i = 0; i < plane; ++i) acc += gy[k * plane + i];
                                db[k] += acc;
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t dilation,
                 std::size_t pad_before) {
  if (x.dim() != 3 || w.dim() != 3) throw ShapeError("conv1d: expected 3-d input and kernel");
  Conv2dParams p;
  p.dilation_t = dilation;
  p.pad_t_before = pad_before;
  auto x4 = reshape(x, Shape{x.size(0), x.size(1), x.size(2), 1});
  auto w4 = reshape(w, Shape{w.size(0), w.size(1), w.size(2), 1});
  auto y = conv2d(x4, w4, bias, p);
  return reshape(y, Shape{y.size(0), y.size(1), y.size(2)});
}

#define VOXMEND_INSTANTIATE(T)                                                                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Conv2dParams&);          \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,         \
                                      std::size_t);                                                              \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);

VOXMEND_INSTANTIATE(float)
VOXMEND_INSTANTIATE(double)

}  // namespace voxmend::ag
