#pragma once

#include "dmrn/tape.hpp"
#include "dmrn/tensor.hpp"

namespace dmrn {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 1;
};

/// Output extent of a convolution along one spatial axis.
std::size_t conv_output_size(std::size_t input, std::size_t kernel,
                             std::size_t stride, std::size_t padding);

/// Cross-correlation of x[N,C,H,W] with w[K,C,kh,kw] (no bias).
/// Lowered to im2col + GEMM.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Conv2dOptions options = {});

/// Direct-loop convolution. Reference for the GEMM path; no tape.
template <typename T>
Tensor<T> conv2d_direct(const Tensor<T>& x, const Tensor<T>& w,
                        Conv2dOptions options = {});

template <typename T>
Var<T> relu(Var<T> x);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

/// Elementwise product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> x, T factor);

/// Sum of all elements, as a scalar.
template <typename T>
Var<T> sum(Var<T> x);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

/// Tracked statistics of one batch-norm layer.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization of x[N,C,H,W] followed by gamma/beta.
/// Training mode uses batch statistics (biased variance) and updates the
/// running estimates (unbiased variance); inference mode uses the running
/// estimates.
template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormState<T>& state,
                  const BatchNormOptions& options);

/// Mean over each H×W plane: [N,C,H,W] -> [N,C,1,1].
template <typename T>
Var<T> adaptive_avg_pool(Var<T> x);

/// x[N,Din] · w[Dout,Din]ᵀ + b[Dout].
template <typename T>
Var<T> fully_connected(Var<T> x, Var<T> w, Var<T> b);

/// Euclidean distance. Rank-1 inputs give a scalar; [N,D] inputs give one
/// distance per row, shape [N]. The subgradient at distance 0 is 0.
template <typename T>
Var<T> l2_distance(Var<T> a, Var<T> b);

}  // namespace dmrn
