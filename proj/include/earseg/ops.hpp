#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "earseg/tensor.hpp"

namespace earseg {

// Forward/backward kernels the segmentation network is assembled from.
// All kernels are pure, deterministic functions with fixed reduction order:
// identical inputs give bit-identical outputs.

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// 3x3 convolution, stride 1, zero padding 1 (spatial size preserved).
// weights shape: (outC, inC, 3, 3); bias length outC.

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         const std::vector<T>& bias) {
  detail::require(weights.h() == 3 && weights.w() == 3,
                  "conv2d_forward: kernel must be 3x3, got " + weights.shape_str());
  detail::require(weights.c() == input.c(),
                  "conv2d_forward: weights expect " + std::to_string(weights.c()) +
                      " input channels, input has " + std::to_string(input.c()));
  detail::require(static_cast<int>(bias.size()) == weights.n(),
                  "conv2d_forward: bias length " + std::to_string(bias.size()) +
                      " does not match filter count " + std::to_string(weights.n()));

  const int N = input.n(), IC = input.c(), H = input.h(), W = input.w();
  const int OC = weights.n();
  Tensor<T> out(N, OC, H, W);

  for (int n = 0; n < N; ++n) {
    for (int oc = 0; oc < OC; ++oc) {
      T* outp = out.plane(n, oc);
      const T b = bias[oc];
      for (std::size_t i = 0, e = out.plane_size(); i < e; ++i) outp[i] = b;
      for (int ic = 0; ic < IC; ++ic) {
        const T* inp = input.plane(n, ic);
        const T* k = weights.plane(oc, ic);  // 9 taps
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const T wv = k[ky * 3 + kx];
            const int xs = std::max(0, 1 - kx);
            const int xe = std::min(W, W + 1 - kx);
            for (int oy = 0; oy < H; ++oy) {
              const int iy = oy + ky - 1;
              if (iy < 0 || iy >= H) continue;
              T* orow = outp + static_cast<std::size_t>(oy) * W;
              const T* irow = inp + static_cast<std::size_t>(iy) * W + (kx - 1);
              for (int ox = xs; ox < xe; ++ox) orow[ox] += wv * irow[ox];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
struct Conv2dGradients {
  Tensor<T> input;
  Tensor<T> weights;
  std::vector<T> bias;
};

template <typename T>
Conv2dGradients<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                   const Tensor<T>& grad_output) {
  detail::require(weights.h() == 3 && weights.w() == 3, "conv2d_backward: kernel must be 3x3");
  detail::require(weights.c() == input.c(), "conv2d_backward: weights/input channel mismatch");
  detail::require(grad_output.n() == input.n() && grad_output.c() == weights.n() &&
                      grad_output.h() == input.h() && grad_output.w() == input.w(),
                  "conv2d_backward: grad_output shape " + grad_output.shape_str() +
                      " inconsistent with input " + input.shape_str());

  const int N = input.n(), IC = input.c(), H = input.h(), W = input.w();
  const int OC = weights.n();

  Conv2dGradients<T> g;
  g.input = Tensor<T>(N, IC, H, W);
  g.weights = Tensor<T>(OC, IC, 3, 3);
  g.bias.assign(OC, T(0));

  for (int n = 0; n < N; ++n) {
    for (int oc = 0; oc < OC; ++oc) {
      const T* gout = grad_output.plane(n, oc);
      T acc = 0;
      for (std::size_t i = 0, e = grad_output.plane_size(); i < e; ++i) acc += gout[i];
      g.bias[oc] += acc;
    }
  }

  // d/dinput: scatter each grad_output row through the 9 taps.
  for (int n = 0; n < N; ++n) {
    for (int ic = 0; ic < IC; ++ic) {
      T* gin = g.input.plane(n, ic);
      for (int oc = 0; oc < OC; ++oc) {
        const T* gout = grad_output.plane(n, oc);
        const T* k = weights.plane(oc, ic);
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const T wv = k[ky * 3 + kx];
            const int xs = std::max(0, 1 - kx);
            const int xe = std::min(W, W + 1 - kx);
            for (int oy = 0; oy < H; ++oy) {
              const int iy = oy + ky - 1;
              if (iy < 0 || iy >= H) continue;
              const T* grow = gout + static_cast<std::size_t>(oy) * W;
              T* irow = gin + static_cast<std::size_t>(iy) * W + (kx - 1);
              for (int ox = xs; ox < xe; ++ox) irow[ox] += wv * grow[ox];
            }
          }
        }
      }
    }
  }

  // d/dweights: per-tap dot products of grad_output with shifted input rows.
  for (int oc = 0; oc < OC; ++oc) {
    for (int ic = 0; ic < IC; ++ic) {
      T* gw = g.weights.plane(oc, ic);
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int xs = std::max(0, 1 - kx);
          const int xe = std::min(W, W + 1 - kx);
          T acc = 0;
          for (int n = 0; n < N; ++n) {
            const T* gout = grad_output.plane(n, oc);
            const T* inp = input.plane(n, ic);
            for (int oy = 0; oy < H; ++oy) {
              const int iy = oy + ky - 1;
              if (iy < 0 || iy >= H) continue;
              const T* grow = gout + static_cast<std::size_t>(oy) * W;
              const T* irow = inp + static_cast<std::size_t>(iy) * W + (kx - 1);
              for (int ox = xs; ox < xe; ++ox) acc += grow[ox] * irow[ox];
            }
          }
          gw[ky * 3 + kx] = acc;
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization over (n, h, w) per channel.

template <typename T>
struct BatchNormCache {
  Tensor<T> x_hat;            // normalized input
  std::vector<T> inv_std;     // per channel 1/sqrt(var + eps)
};

// Train mode normalizes by batch statistics (biased variance) and advances the
// running stats by EMA: running = (1 - momentum) * running + momentum * batch.
// Infer mode normalizes by the running stats and leaves them untouched.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, const std::vector<T>& gamma,
                            const std::vector<T>& beta, std::vector<T>& running_mean,
                            std::vector<T>& running_var, bool training, T eps, T momentum,
                            BatchNormCache<T>* cache = nullptr) {
  const int C = input.c();
  detail::require(static_cast<int>(gamma.size()) == C && static_cast<int>(beta.size()) == C,
                  "batchnorm_forward: gamma/beta length must equal channel count");
  detail::require(static_cast<int>(running_mean.size()) == C &&
                      static_cast<int>(running_var.size()) == C,
                  "batchnorm_forward: running stats length must equal channel count");
  detail::require(eps > T(0), "batchnorm_forward: eps must be positive");

  const int N = input.n(), H = input.h(), W = input.w();
  const std::size_t plane = input.plane_size();
  const T m = static_cast<T>(static_cast<std::size_t>(N) * H * W);

  Tensor<T> out(N, C, H, W);
  if (cache) {
    cache->x_hat = Tensor<T>(N, C, H, W);
    cache->inv_std.assign(C, T(0));
  }

  for (int c = 0; c < C; ++c) {
    T mean, inv_std;
    if (training) {
      T sum = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = input.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = sum / m;
      T sq = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = input.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const T d = p[i] - mean;
          sq += d * d;
        }
      }
      const T var = sq / m;
      inv_std = T(1) / std::sqrt(var + eps);
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mean;
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * var;
    } else {
      mean = running_mean[c];
      inv_std = T(1) / std::sqrt(running_var[c] + eps);
    }

    const T gc = gamma[c], bc = beta[c];
    for (int n = 0; n < N; ++n) {
      const T* p = input.plane(n, c);
      T* o = out.plane(n, c);
      T* xh = cache ? cache->x_hat.plane(n, c) : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const T nrm = (p[i] - mean) * inv_std;
        if (xh) xh[i] = nrm;
        o[i] = gc * nrm + bc;
      }
    }
    if (cache) cache->inv_std[c] = inv_std;
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& grad_output, const BatchNormCache<T>& cache,
                             const std::vector<T>& gamma, std::vector<T>& grad_gamma,
                             std::vector<T>& grad_beta) {
  detail::require(grad_output.same_shape(cache.x_hat),
                  "batchnorm_backward: grad_output shape does not match cached activations");
  const int N = grad_output.n(), C = grad_output.c();
  const std::size_t plane = grad_output.plane_size();
  const T m = static_cast<T>(static_cast<std::size_t>(N) * plane);

  grad_gamma.assign(C, T(0));
  grad_beta.assign(C, T(0));
  Tensor<T> gin(grad_output.n(), C, grad_output.h(), grad_output.w());

  for (int c = 0; c < C; ++c) {
    T sum_dy = 0, sum_dy_xhat = 0;
    for (int n = 0; n < N; ++n) {
      const T* dy = grad_output.plane(n, c);
      const T* xh = cache.x_hat.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xh[i];
      }
    }
    grad_beta[c] = sum_dy;
    grad_gamma[c] = sum_dy_xhat;

    // dx = gamma * inv_std * (dy - mean(dy) - x_hat * mean(dy * x_hat))
    const T scale = gamma[c] * cache.inv_std[c];
    const T mean_dy = sum_dy / m;
    const T mean_dy_xhat = sum_dy_xhat / m;
    for (int n = 0; n < N; ++n) {
      const T* dy = grad_output.plane(n, c);
      const T* xh = cache.x_hat.plane(n, c);
      T* o = gin.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        o[i] = scale * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
      }
    }
  }
  return gin;
}

// ---------------------------------------------------------------------------
// ReLU. The gradient at exactly 0 is defined as 0.

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out = input;
  T* p = out.data();
  for (std::size_t i = 0, e = out.size(); i < e; ++i) {
    if (p[i] < T(0)) p[i] = T(0);
  }
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_output, const Tensor<T>& pre_activation) {
  detail::require(grad_output.same_shape(pre_activation),
                  "relu_backward: grad/pre-activation shape mismatch");
  Tensor<T> gin = grad_output;
  T* g = gin.data();
  const T* x = pre_activation.data();
  for (std::size_t i = 0, e = gin.size(); i < e; ++i) {
    if (x[i] <= T(0)) g[i] = T(0);
  }
  return gin;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2, ceil-mode output size with edge windows clipped
// to the valid region. Argmax ties break to the smallest row-major index.

template <typename T>
std::pair<Tensor<T>, PoolIndices> maxpool2x2(const Tensor<T>& input) {
  const int N = input.n(), C = input.c(), H = input.h(), W = input.w();
  const int PH = (H + 1) / 2, PW = (W + 1) / 2;

  Tensor<T> out(N, C, PH, PW);
  PoolIndices idx;
  idx.n = N;
  idx.c = C;
  idx.pooled_h = PH;
  idx.pooled_w = PW;
  idx.src_h = H;
  idx.src_w = W;
  idx.argmax.assign(static_cast<std::size_t>(N) * C * PH * PW, 0);

  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* in = input.plane(n, c);
      T* o = out.plane(n, c);
      std::int32_t* am = idx.argmax.data() + idx.flat(n, c, 0, 0);
      for (int py = 0; py < PH; ++py) {
        const int y0 = 2 * py, y1 = std::min(y0 + 2, H);
        for (int px = 0; px < PW; ++px) {
          const int x0 = 2 * px, x1 = std::min(x0 + 2, W);
          T best = in[static_cast<std::size_t>(y0) * W + x0];
          std::int32_t best_i = y0 * W + x0;
          for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
              const T v = in[static_cast<std::size_t>(y) * W + x];
              if (v > best) {
                best = v;
                best_i = y * W + x;
              }
            }
          }
          o[static_cast<std::size_t>(py) * PW + px] = best;
          am[static_cast<std::size_t>(py) * PW + px] = best_i;
        }
      }
    }
  }
  return {std::move(out), std::move(idx)};
}

// Places each pooled value back at its recorded argmax position inside the
// recorded pre-pool extent; every other position is zero. Indices that fall
// outside their own pooling window indicate corruption and are rejected.
template <typename T>
Tensor<T> unpool2x2(const Tensor<T>& pooled, const PoolIndices& idx) {
  detail::require(pooled.n() == idx.n && pooled.c() == idx.c && pooled.h() == idx.pooled_h &&
                      pooled.w() == idx.pooled_w,
                  "unpool2x2: pooled shape " + pooled.shape_str() +
                      " does not match recorded indices");

  const int H = idx.src_h, W = idx.src_w;
  Tensor<T> out(idx.n, idx.c, H, W);

  for (int n = 0; n < idx.n; ++n) {
    for (int c = 0; c < idx.c; ++c) {
      const T* p = pooled.plane(n, c);
      T* o = out.plane(n, c);
      const std::int32_t* am = idx.argmax.data() + idx.flat(n, c, 0, 0);
      for (int py = 0; py < idx.pooled_h; ++py) {
        for (int px = 0; px < idx.pooled_w; ++px) {
          const std::int32_t i = am[static_cast<std::size_t>(py) * idx.pooled_w + px];
          const int y = i / W, x = i % W;
          if (i < 0 || y < 2 * py || y >= std::min(2 * py + 2, H) || x < 2 * px ||
              x >= std::min(2 * px + 2, W)) {
            throw std::invalid_argument("unpool2x2: corrupted index " + std::to_string(i) +
                                        " outside window at pooled cell (" + std::to_string(py) +
                                        "," + std::to_string(px) + ")");
          }
          o[i] = p[static_cast<std::size_t>(py) * idx.pooled_w + px];
        }
      }
    }
  }
  return out;
}

// Adjoint of unpool2x2: reads the value at each recorded argmax position.
// Used to route gradients backward through an unpooling layer.
template <typename T>
Tensor<T> pool_gather(const Tensor<T>& full, const PoolIndices& idx) {
  detail::require(full.n() == idx.n && full.c() == idx.c && full.h() == idx.src_h &&
                      full.w() == idx.src_w,
                  "pool_gather: tensor shape " + full.shape_str() +
                      " does not match recorded pre-pool extent");
  Tensor<T> out(idx.n, idx.c, idx.pooled_h, idx.pooled_w);
  for (int n = 0; n < idx.n; ++n) {
    for (int c = 0; c < idx.c; ++c) {
      const T* f = full.plane(n, c);
      T* o = out.plane(n, c);
      const std::int32_t* am = idx.argmax.data() + idx.flat(n, c, 0, 0);
      const std::size_t cells = static_cast<std::size_t>(idx.pooled_h) * idx.pooled_w;
      for (std::size_t i = 0; i < cells; ++i) o[i] = f[am[i]];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pixel-wise softmax over the channel axis, stabilized by max subtraction.

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& input) {
  const int N = input.n(), C = input.c(), H = input.h(), W = input.w();
  detail::require(C >= 1, "softmax_channels: need at least one channel");
  Tensor<T> out(N, C, H, W);
  const std::size_t plane = input.plane_size();

  for (int n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      T mx = input.plane(n, 0)[i];
      for (int c = 1; c < C; ++c) mx = std::max(mx, input.plane(n, c)[i]);
      T sum = 0;
      for (int c = 0; c < C; ++c) {
        const T e = std::exp(input.plane(n, c)[i] - mx);
        out.plane(n, c)[i] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (int c = 0; c < C; ++c) out.plane(n, c)[i] *= inv;
    }
  }
  return out;
}

// Jacobian-vector product of the pixel-wise softmax:
// dz_c = s_c * (g_c - sum_j g_j s_j) per pixel.
template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& grad_output, const Tensor<T>& softmax_out) {
  detail::require(grad_output.same_shape(softmax_out),
                  "softmax_channels_backward: shape mismatch");
  const int N = softmax_out.n(), C = softmax_out.c();
  const std::size_t plane = softmax_out.plane_size();
  Tensor<T> gin(softmax_out.n(), C, softmax_out.h(), softmax_out.w());

  for (int n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      T dot = 0;
      for (int c = 0; c < C; ++c) dot += grad_output.plane(n, c)[i] * softmax_out.plane(n, c)[i];
      for (int c = 0; c < C; ++c) {
        gin.plane(n, c)[i] = softmax_out.plane(n, c)[i] * (grad_output.plane(n, c)[i] - dot);
      }
    }
  }
  return gin;
}

}  // namespace earseg
