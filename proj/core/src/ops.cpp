#include "dmrn/ops.hpp"

#include <Eigen/Core>
#include <cmath>

namespace dmrn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a) +
                     " vs " + shape_to_string(b));
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_to_string(s));
  }
}

template <typename T>
void check_same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands on different tapes");
}

struct ConvGeometry {
  std::size_t n, c, h, w;
  std::size_t k, kh, kw;
  std::size_t oh, ow;
  std::size_t stride, padding;

  std::size_t patch() const { return c * kh * kw; }
  std::size_t plane() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Shape& xs, const Shape& ws, Conv2dOptions opt) {
  require_rank(xs, 4, "conv2d input");
  require_rank(ws, 4, "conv2d kernel");
  if (xs[1] != ws[1]) {
    throw ShapeError("conv2d: input has " + std::to_string(xs[1]) +
                     " channels, kernel expects " + std::to_string(ws[1]));
  }
  if (opt.stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], 0, 0,
                 opt.stride, opt.padding};
  g.oh = conv_output_size(g.h, g.kh, g.stride, g.padding);
  g.ow = conv_output_size(g.w, g.kw, g.stride, g.padding);
  return g;
}

// col has shape [patch, N * plane]; column index = n * plane + oy * ow + ox.
template <typename T>
void im2col(const ConvGeometry& g, std::span<const T> x, std::vector<T>& col) {
  const std::size_t cols = g.n * g.plane();
  col.assign(g.patch() * cols, T{0});
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col.data() + ((c * g.kh + i) * g.kw + j) * cols;
        for (std::size_t n = 0; n < g.n; ++n) {
          const T* plane = x.data() + (n * g.c + c) * g.h * g.w;
          T* dst = row + n * g.plane();
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const std::ptrdiff_t y =
                static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                static_cast<std::ptrdiff_t>(g.padding);
            if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const std::ptrdiff_t xx =
                  static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                  static_cast<std::ptrdiff_t>(g.padding);
              if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(g.w)) continue;
              dst[oy * g.ow + ox] = plane[y * g.w + xx];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const std::vector<T>& col, std::span<T> dx) {
  const std::size_t cols = g.n * g.plane();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col.data() + ((c * g.kh + i) * g.kw + j) * cols;
        for (std::size_t n = 0; n < g.n; ++n) {
          T* plane = dx.data() + (n * g.c + c) * g.h * g.w;
          const T* src = row + n * g.plane();
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const std::ptrdiff_t y =
                static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                static_cast<std::ptrdiff_t>(g.padding);
            if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const std::ptrdiff_t xx =
                  static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                  static_cast<std::ptrdiff_t>(g.padding);
              if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(g.w)) continue;
              plane[y * g.w + xx] += src[oy * g.ow + ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_size(std::size_t input, std::size_t kernel,
                             std::size_t stride, std::size_t padding) {
  if (input + 2 * padding < kernel) {
    throw ShapeError("conv2d: kernel " + std::to_string(kernel) +
                     " larger than padded input " +
                     std::to_string(input + 2 * padding));
  }
  return (input + 2 * padding - kernel) / stride + 1;
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Conv2dOptions options) {
  check_same_tape(x, w, "conv2d");
  const ConvGeometry g = conv_geometry(x.shape(), w.shape(), options);
  Tape<T>& tape = *x.tape;

  std::vector<T> col;
  im2col<T>(g, x.value().data(), col);
  const std::size_t cols = g.n * g.plane();
  RowMatrix<T> out =
      ConstMatrixMap<T>(w.value().data().data(), g.k, g.patch()) *
      ConstMatrixMap<T>(col.data(), g.patch(), cols);

  Tensor<T> y(Shape{g.n, g.k, g.oh, g.ow});
  auto yd = y.data();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t k = 0; k < g.k; ++k) {
      const T* src = out.data() + k * cols + n * g.plane();
      std::copy(src, src + g.plane(), yd.data() + (n * g.k + k) * g.plane());
    }
  }

  const std::size_t xi = x.id, wi = w.id;
  return tape.record(std::move(y), {xi, wi}, [g, xi, wi](Tape<T>& t, std::size_t self) {
    const auto dy = t.grad(self);
    const std::size_t cols = g.n * g.plane();
    RowMatrix<T> dy_mat(g.k, cols);
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t k = 0; k < g.k; ++k) {
        const T* src = dy.data() + (n * g.k + k) * g.plane();
        std::copy(src, src + g.plane(), dy_mat.data() + k * cols + n * g.plane());
      }
    }
    std::vector<T> col;
    if (t.requires_grad(wi)) {
      im2col<T>(g, t.value(xi).data(), col);
      MatrixMap<T>(t.grad(wi).data(), g.k, g.patch()).noalias() +=
          dy_mat * ConstMatrixMap<T>(col.data(), g.patch(), cols).transpose();
    }
    if (t.requires_grad(xi)) {
      col.assign(g.patch() * cols, T{0});
      MatrixMap<T>(col.data(), g.patch(), cols).noalias() =
          ConstMatrixMap<T>(t.value(wi).data().data(), g.k, g.patch()).transpose() *
          dy_mat;
      col2im_add<T>(g, col, t.grad(xi));
    }
  });
}

template <typename T>
Tensor<T> conv2d_direct(const Tensor<T>& x, const Tensor<T>& w, Conv2dOptions options) {
  const ConvGeometry g = conv_geometry(x.shape(), w.shape(), options);
  Tensor<T> y(Shape{g.n, g.k, g.oh, g.ow});
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t k = 0; k < g.k; ++k) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          T acc{0};
          for (std::size_t c = 0; c < g.c; ++c) {
            for (std::size_t i = 0; i < g.kh; ++i) {
              for (std::size_t j = 0; j < g.kw; ++j) {
                const std::ptrdiff_t yy =
                    static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                    static_cast<std::ptrdiff_t>(g.padding);
                const std::ptrdiff_t xx =
                    static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                    static_cast<std::ptrdiff_t>(g.padding);
                if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(g.h) ||
                    xx >= static_cast<std::ptrdiff_t>(g.w)) {
                  continue;
                }
                acc += x.at(n, c, yy, xx) * w.at(k, c, i, j);
              }
            }
          }
          y.at(n, k, oy, ox) = acc;
        }
      }
    }
  }
  return y;
}

template <typename T>
Var<T> relu(Var<T> x) {
  const auto xv = x.value().data();
  Tensor<T> y(x.shape());
  auto yd = y.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = xv[i] < T{0} ? T{0} : xv[i];
  const std::size_t xi = x.id;
  return x.tape->record(std::move(y), {xi}, [xi](Tape<T>& t, std::size_t self) {
    const auto dy = t.grad(self);
    const auto xv = t.value(xi).data();
    auto dx = t.grad(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xv[i] > T{0}) dx[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  check_same_tape(a, b, "add");
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> y = a.value();
  y.drop_grad();
  auto yd = y.data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {ai, bi}, [ai, bi](Tape<T>& t, std::size_t self) {
    const auto dy = t.grad(self);
    for (std::size_t id : {ai, bi}) {
      if (!t.requires_grad(id)) continue;
      auto d = t.grad(id);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  check_same_tape(a, b, "mul");
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> y(a.shape());
  auto yd = y.data();
  const auto av = a.value().data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = av[i] * bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {ai, bi}, [ai, bi](Tape<T>& t, std::size_t self) {
    const auto dy = t.grad(self);
    const auto av = t.value(ai).data();
    const auto bv = t.value(bi).data();
    if (t.requires_grad(ai)) {
      auto d = t.grad(ai);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * bv[i];
    }
    if (t.requires_grad(bi)) {
      auto d = t.grad(bi);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Tensor<T> y(x.shape());
  auto yd = y.data();
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = xv[i] * factor;
  const std::size_t xi = x.id;
  return x.tape->record(std::move(y), {xi}, [xi, factor](Tape<T>& t, std::size_t self) {
    const auto dy = t.grad(self);
    auto dx = t.grad(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T acc{0};
  for (T v : x.value().data()) acc += v;
  const std::size_t xi = x.id;
  return x.tape->record(Tensor<T>::scalar(acc), {xi}, [xi](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    for (T& d : t.grad(xi)) d += g;
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> y = x.value();
  y.drop_grad();
  y.reshape(std::move(shape));
  const std::size_t xi = x.id;
  return x.tape->record(std::move(y), {xi}, [xi](Tape<T>& t, std::size_t self) {
    const auto dy = t.grad(self);
    auto dx = t.grad(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
  });
}

template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormState<T>& state,
                  const BatchNormOptions& options) {
  check_same_tape(x, gamma, "batch_norm");
  check_same_tape(x, beta, "batch_norm");
  const Shape& xs = x.shape();
  require_rank(xs, 4, "batch_norm");
  const std::size_t n = xs[0], c = xs[1], plane = xs[2] * xs[3];
  const Shape channel_shape{c};
  require_same_shape(gamma.shape(), channel_shape, "batch_norm gamma");
  require_same_shape(beta.shape(), channel_shape, "batch_norm beta");
  require_same_shape(state.running_mean.shape(), channel_shape, "batch_norm running_mean");
  require_same_shape(state.running_var.shape(), channel_shape, "batch_norm running_var");

  const std::size_t count = n * plane;
  if (options.training && count == 0) {
    throw ShapeError("batch_norm: empty batch in training mode");
  }

  const auto xv = x.value().data();
  const auto gv = gamma.value().data();
  const auto bv = beta.value().data();
  Tensor<T> y(xs);
  auto yd = y.data();
  std::vector<T> xhat(xv.size());
  std::vector<T> inv_std(c);

  for (std::size_t ch = 0; ch < c; ++ch) {
    T mean, var;
    if (options.training) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv.data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv.data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - m;
          ss += d * d;
        }
      }
      mean = static_cast<T>(m);
      var = static_cast<T>(ss / static_cast<double>(count));
      const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : 0.0;
      const T mom = static_cast<T>(options.momentum);
      state.running_mean[ch] = (T{1} - mom) * state.running_mean[ch] + mom * mean;
      state.running_var[ch] =
          (T{1} - mom) * state.running_var[ch] + mom * static_cast<T>(unbiased);
    } else {
      mean = state.running_mean[ch];
      var = state.running_var[ch];
    }
    inv_std[ch] = T{1} / std::sqrt(var + static_cast<T>(options.eps));
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = (xv[off + i] - mean) * inv_std[ch];
        xhat[off + i] = h;
        yd[off + i] = gv[ch] * h + bv[ch];
      }
    }
  }

  const std::size_t xi = x.id, gi = gamma.id, bi = beta.id;
  const bool training = options.training;
  return x.tape->record(
      std::move(y), {xi, gi, bi},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t,
                                                                std::size_t self) {
        const auto dy = t.grad(self);
        const auto gv = t.value(gi).data();
        std::vector<T> sum_dy(c, T{0}), sum_dy_xhat(c, T{0});
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy[ch] += dy[off + i];
              sum_dy_xhat[ch] += dy[off + i] * xhat[off + i];
            }
          }
        }
        if (t.requires_grad(gi)) {
          auto dg = t.grad(gi);
          for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += sum_dy_xhat[ch];
        }
        if (t.requires_grad(bi)) {
          auto db = t.grad(bi);
          for (std::size_t ch = 0; ch < c; ++ch) db[ch] += sum_dy[ch];
        }
        if (!t.requires_grad(xi)) return;
        auto dx = t.grad(xi);
        const T m = static_cast<T>(count);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (b * c + ch) * plane;
            const T k = gv[ch] * inv_std[ch];
            for (std::size_t i = 0; i < plane; ++i) {
              if (training) {
                dx[off + i] += k * (dy[off + i] - sum_dy[ch] / m -
                                    xhat[off + i] * sum_dy_xhat[ch] / m);
              } else {
                dx[off + i] += k * dy[off + i];
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> adaptive_avg_pool(Var<T> x) {
  const Shape& xs = x.shape();
  require_rank(xs, 4, "adaptive_avg_pool");
  const std::size_t planes = xs[0] * xs[1], plane = xs[2] * xs[3];
  if (plane == 0) throw ShapeError("adaptive_avg_pool: empty spatial plane");
  const auto xv = x.value().data();
  Tensor<T> y(Shape{xs[0], xs[1], 1, 1});
  for (std::size_t p = 0; p < planes; ++p) {
    T acc{0};
    for (std::size_t i = 0; i < plane; ++i) acc += xv[p * plane + i];
    y[p] = acc / static_cast<T>(plane);
  }
  const std::size_t xi = x.id;
  return x.tape->record(std::move(y), {xi}, [xi, planes, plane](Tape<T>& t, std::size_t self) {
    const auto dy = t.grad(self);
    auto dx = t.grad(xi);
    const T inv = T{1} / static_cast<T>(plane);
    for (std::size_t p = 0; p < planes; ++p) {
      const T g = dy[p] * inv;
      for (std::size_t i = 0; i < plane; ++i) dx[p * plane + i] += g;
    }
  });
}

template <typename T>
Var<T> fully_connected(Var<T> x, Var<T> w, Var<T> b) {
  check_same_tape(x, w, "fully_connected");
  check_same_tape(x, b, "fully_connected");
  require_rank(x.shape(), 2, "fully_connected input");
  require_rank(w.shape(), 2, "fully_connected weight");
  require_rank(b.shape(), 1, "fully_connected bias");
  const std::size_t n = x.shape()[0], din = x.shape()[1], dout = w.shape()[0];
  if (w.shape()[1] != din || b.shape()[0] != dout) {
    throw ShapeError("fully_connected: input " + shape_to_string(x.shape()) +
                     ", weight " + shape_to_string(w.shape()) + ", bias " +
                     shape_to_string(b.shape()));
  }
  Tensor<T> y(Shape{n, dout});
  MatrixMap<T> ym(y.data().data(), n, dout);
  ym.noalias() = ConstMatrixMap<T>(x.value().data().data(), n, din) *
                 ConstMatrixMap<T>(w.value().data().data(), dout, din).transpose();
  const auto bv = b.value().data();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < dout; ++o) ym(r, o) += bv[o];
  }
  const std::size_t xi = x.id, wi = w.id, bi = b.id;
  return x.tape->record(std::move(y), {xi, wi, bi},
                        [=](Tape<T>& t, std::size_t self) {
    ConstMatrixMap<T> dy(t.grad(self).data(), n, dout);
    if (t.requires_grad(xi)) {
      MatrixMap<T>(t.grad(xi).data(), n, din).noalias() +=
          dy * ConstMatrixMap<T>(t.value(wi).data().data(), dout, din);
    }
    if (t.requires_grad(wi)) {
      MatrixMap<T>(t.grad(wi).data(), dout, din).noalias() +=
          dy.transpose() * ConstMatrixMap<T>(t.value(xi).data().data(), n, din);
    }
    if (t.requires_grad(bi)) {
      auto db = t.grad(bi);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t o = 0; o < dout; ++o) db[o] += dy(r, o);
      }
    }
  });
}

template <typename T>
Var<T> l2_distance(Var<T> a, Var<T> b) {
  check_same_tape(a, b, "l2_distance");
  require_same_shape(a.shape(), b.shape(), "l2_distance");
  const Shape& s = a.shape();
  if (s.size() != 1 && s.size() != 2) {
    throw ShapeError("l2_distance: expected [D] or [N,D], got " + shape_to_string(s));
  }
  const std::size_t rows = s.size() == 1 ? 1 : s[0];
  const std::size_t d = s.back();
  const auto av = a.value().data();
  const auto bv = b.value().data();
  Tensor<T> y(s.size() == 1 ? Shape{} : Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    T acc{0};
    for (std::size_t i = 0; i < d; ++i) {
      const T diff = av[r * d + i] - bv[r * d + i];
      acc += diff * diff;
    }
    y[r] = std::sqrt(acc);
  }
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {ai, bi}, [=](Tape<T>& t, std::size_t self) {
    const auto dy = t.grad(self);
    const auto dist = t.value(self).data();
    const auto av = t.value(ai).data();
    const auto bv = t.value(bi).data();
    for (std::size_t r = 0; r < rows; ++r) {
      if (dist[r] == T{0}) continue;
      const T k = dy[r] / dist[r];
      for (std::size_t i = 0; i < d; ++i) {
        const T g = k * (av[r * d + i] - bv[r * d + i]);
        if (t.requires_grad(ai)) t.grad(ai)[r * d + i] += g;
        if (t.requires_grad(bi)) t.grad(bi)[r * d + i] -= g;
      }
    }
  });
}

#define DMRN_INSTANTIATE_OPS(T)                                                   \
  template Var<T> conv2d(Var<T>, Var<T>, Conv2dOptions);                          \
  template Tensor<T> conv2d_direct(const Tensor<T>&, const Tensor<T>&,            \
                                   Conv2dOptions);                                \
  template Var<T> relu(Var<T>);                                                   \
  template Var<T> add(Var<T>, Var<T>);                                            \
  template Var<T> mul(Var<T>, Var<T>);                                            \
  template Var<T> scale(Var<T>, T);                                               \
  template Var<T> sum(Var<T>);                                                    \
  template Var<T> reshape(Var<T>, Shape);                                         \
  template Var<T> batch_norm(Var<T>, Var<T>, Var<T>, BatchNormState<T>&,          \
                             const BatchNormOptions&);                            \
  template Var<T> adaptive_avg_pool(Var<T>);                                      \
  template Var<T> fully_connected(Var<T>, Var<T>, Var<T>);                        \
  template Var<T> l2_distance(Var<T>, Var<T>);

DMRN_INSTANTIATE_OPS(float)
DMRN_INSTANTIATE_OPS(double)

#undef DMRN_INSTANTIATE_OPS

}  // namespace dmrn
