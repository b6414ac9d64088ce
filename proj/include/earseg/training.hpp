#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "earseg/mask.hpp"
#include "earseg/network.hpp"
#include "earseg/rng.hpp"
#include "earseg/tensor.hpp"

namespace earseg {

struct TrainConfig {
  double learning_rate = 0.0001;
  double momentum = 0.9;
  double weight_decay = 0.005;   // applied to conv weights only
  int max_iterations = 10000;
  int log_every = 20;
  int batch_size = 1;
  bool class_balancing = true;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train config: momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be non-negative");
    if (max_iterations < 1) throw std::invalid_argument("train config: max_iterations must be at least 1");
    if (log_every < 1) throw std::invalid_argument("train config: log_every must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be at least 1");
  }
};

// Per-class loss weights; index 0 = background, 1 = ear.
struct ClassWeights {
  double background = 1.0;
  double ear = 1.0;

  double at(int c) const { return c == 0 ? background : ear; }
};

// Median frequency balancing. For each class:
//   freq(c)   = (pixels of class c, summed over images containing c)
//             / (total pixel count of the images containing c)
//   weight(c) = median(all class frequencies) / freq(c)
// With two classes the median is the mean of the two frequencies. Rare
// classes therefore get weights above one.
inline ClassWeights median_frequency_weights(const std::vector<LabelMask>& masks) {
  if (masks.empty()) throw std::invalid_argument("class balancing: no masks given");

  double class_pixels[2] = {0.0, 0.0};
  double present_pixels[2] = {0.0, 0.0};  // total pixels of images containing the class
  for (const auto& m : masks) {
    const double total = static_cast<double>(m.pixel_count());
    const double ear = static_cast<double>(m.ear_pixels());
    const double bg = total - ear;
    if (bg > 0.0) {
      class_pixels[0] += bg;
      present_pixels[0] += total;
    }
    if (ear > 0.0) {
      class_pixels[1] += ear;
      present_pixels[1] += total;
    }
  }
  for (int c = 0; c < 2; ++c) {
    if (present_pixels[c] == 0.0) {
      throw std::invalid_argument("class balancing: class " + std::to_string(c) +
                                  " never occurs in the training masks");
    }
  }
  const double freq_bg = class_pixels[0] / present_pixels[0];
  const double freq_ear = class_pixels[1] / present_pixels[1];
  const double median = 0.5 * (freq_bg + freq_ear);
  return {median / freq_bg, median / freq_ear};
}

// ---------------------------------------------------------------------------
// Loss.

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad_logits;  // d(loss)/d(logits), softmax already folded in
};

// Pixel-wise weighted cross-entropy over softmax probabilities:
//   loss = -(1/N) sum_i w(t_i) log p_i(t_i),   N = number of pixels
// The returned gradient is taken w.r.t. the pre-softmax logits, using the
// fused softmax + cross-entropy derivative w(t) * (p_c - [c == t]) / N.
template <typename T>
LossResult<T> weighted_cross_entropy(const Tensor<T>& probs, const Tensor<std::uint8_t>& targets,
                                     const ClassWeights& weights) {
  if (probs.c() != 2) {
    throw std::invalid_argument("cross entropy: expected 2 probability channels, got " +
                                std::to_string(probs.c()));
  }
  if (targets.n() != probs.n() || targets.c() != 1 || targets.h() != probs.h() ||
      targets.w() != probs.w()) {
    throw std::invalid_argument("cross entropy: target shape " + targets.shape_str() +
                                " does not match probabilities " + probs.shape_str());
  }

  constexpr double kLogFloor = 1e-12;
  const int n = probs.n(), h = probs.h(), w = probs.w();
  const std::size_t plane = probs.plane_size();
  const double inv_pixels = 1.0 / (static_cast<double>(n) * h * w);

  LossResult<T> result;
  result.grad_logits = Tensor<T>(n, 2, h, w);
  double loss = 0.0;
  for (int b = 0; b < n; ++b) {
    const T* p0 = probs.plane(b, 0);
    const T* p1 = probs.plane(b, 1);
    const std::uint8_t* t = targets.plane(b, 0);
    T* g0 = result.grad_logits.plane(b, 0);
    T* g1 = result.grad_logits.plane(b, 1);
    for (std::size_t i = 0; i < plane; ++i) {
      if (t[i] > 1) {
        throw std::invalid_argument("cross entropy: target labels must be 0 or 1");
      }
      const int cls = t[i];
      const double wt = weights.at(cls);
      const double p_true = static_cast<double>(cls == 0 ? p0[i] : p1[i]);
      loss -= wt * std::log(std::max(p_true, kLogFloor));
      const double scale = wt * inv_pixels;
      g0[i] = static_cast<T>(scale * (static_cast<double>(p0[i]) - (cls == 0 ? 1.0 : 0.0)));
      g1[i] = static_cast<T>(scale * (static_cast<double>(p1[i]) - (cls == 1 ? 1.0 : 0.0)));
    }
  }
  result.loss = loss * inv_pixels;
  return result;
}

// ---------------------------------------------------------------------------
// SGD with momentum and weight decay.

namespace detail {

template <typename T>
void check_finite(const T* g, std::size_t count, const std::string& what) {
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(static_cast<double>(g[i]))) {
      throw std::runtime_error("training: non-finite gradient in " + what);
    }
  }
}

// v <- momentum * v - lr * (g + wd * p);  p <- p + v
template <typename T>
void momentum_update(T* p, const T* g, T* v, std::size_t count, double lr, double momentum,
                     double wd) {
  for (std::size_t i = 0; i < count; ++i) {
    const double vel = momentum * static_cast<double>(v[i]) -
                       lr * (static_cast<double>(g[i]) + wd * static_cast<double>(p[i]));
    v[i] = static_cast<T>(vel);
    p[i] = static_cast<T>(static_cast<double>(p[i]) + vel);
  }
}

}  // namespace detail

// One optimizer step. `velocity` must be structurally congruent to the
// parameters (start from zero_gradients) and is updated in place. Weight
// decay applies to convolution weights only — biases and batch-norm
// parameters decay-free. Throws std::runtime_error naming the layer if any
// gradient is non-finite.
template <typename T>
void sgd_step(NetworkParams<T>& params, const NetworkGradients<T>& grads,
              NetworkGradients<T>& velocity, const TrainConfig& cfg) {
  cfg.validate();
  if (grads.conv.size() != params.conv.size() || grads.bn.size() != params.bn.size() ||
      velocity.conv.size() != params.conv.size() || velocity.bn.size() != params.bn.size()) {
    throw std::invalid_argument("sgd: gradient/velocity structure does not match parameters");
  }

  const double lr = cfg.learning_rate, mu = cfg.momentum, wd = cfg.weight_decay;
  for (std::size_t i = 0; i < params.conv.size(); ++i) {
    const std::string tag = "conv layer " + std::to_string(i + 1);
    detail::check_finite(grads.conv[i].weight.data(), grads.conv[i].weight.size(),
                         tag + " (weight)");
    detail::check_finite(grads.conv[i].bias.data(), grads.conv[i].bias.size(), tag + " (bias)");
    detail::momentum_update(params.conv[i].weight.data(), grads.conv[i].weight.data(),
                            velocity.conv[i].weight.data(), params.conv[i].weight.size(), lr, mu,
                            wd);
    detail::momentum_update(params.conv[i].bias.data(), grads.conv[i].bias.data(),
                            velocity.conv[i].bias.data(), params.conv[i].bias.size(), lr, mu, 0.0);
  }
  for (std::size_t i = 0; i < params.bn.size(); ++i) {
    const std::string tag = "batch-norm layer " + std::to_string(i + 1);
    detail::check_finite(grads.bn[i].gamma.data(), grads.bn[i].gamma.size(), tag + " (gamma)");
    detail::check_finite(grads.bn[i].beta.data(), grads.bn[i].beta.size(), tag + " (beta)");
    detail::momentum_update(params.bn[i].gamma.data(), grads.bn[i].gamma.data(),
                            velocity.bn[i].gamma.data(), params.bn[i].gamma.size(), lr, mu, 0.0);
    detail::momentum_update(params.bn[i].beta.data(), grads.bn[i].beta.data(),
                            velocity.bn[i].beta.data(), params.bn[i].beta.size(), lr, mu, 0.0);
  }
}

// ---------------------------------------------------------------------------
// Training loop.

template <typename T = float>
struct TrainSample {
  Tensor<T> image;            // (1, 3, h, w), values in [0, 1]
  Tensor<std::uint8_t> mask;  // (1, 1, h, w), labels 0/1
};

struct TrainLogRecord {
  int iteration = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainStats {
  std::vector<TrainLogRecord> log;
  ClassWeights weights;
  double final_loss = 0.0;
};

template <typename T>
double pixel_accuracy(const Tensor<T>& probs, const Tensor<std::uint8_t>& targets) {
  const std::size_t plane = probs.plane_size();
  std::size_t hits = 0, total = 0;
  for (int b = 0; b < probs.n(); ++b) {
    const T* p0 = probs.plane(b, 0);
    const T* p1 = probs.plane(b, 1);
    const std::uint8_t* t = targets.plane(b, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      const int pred = (p1[i] > p0[i]) ? 1 : 0;  // tie resolves to background
      hits += (pred == t[i]);
    }
    total += plane;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

// Runs SGD over randomly drawn mini-batches. All samples must share one
// spatial size. Log records are appended at every multiple of
// `cfg.log_every` and at the final iteration; `on_log` (if given) observes
// each record as it is produced. The draw order is fully determined by
// `seed`, so identical inputs give identical parameter trajectories.
template <typename T>
TrainStats train(const NetworkSpec& spec, NetworkParams<T>& params,
                 const std::vector<TrainSample<T>>& data, const TrainConfig& cfg,
                 std::uint64_t seed,
                 const std::function<void(const TrainLogRecord&)>& on_log = {}) {
  cfg.validate();
  spec.validate();
  if (data.empty()) throw std::invalid_argument("train: no training samples");
  const int h = data[0].image.h(), w = data[0].image.w();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    if (s.image.n() != 1 || s.image.c() != spec.in_channels || s.image.h() != h ||
        s.image.w() != w) {
      throw std::invalid_argument("train: sample " + std::to_string(i) + " image shape " +
                                  s.image.shape_str() + " is inconsistent");
    }
    if (s.mask.n() != 1 || s.mask.c() != 1 || s.mask.h() != h || s.mask.w() != w) {
      throw std::invalid_argument("train: sample " + std::to_string(i) + " mask shape " +
                                  s.mask.shape_str() + " does not match its image");
    }
  }

  bool saw_class[2] = {false, false};
  for (const auto& s : data) {
    const std::size_t ear = std::count(s.mask.data(), s.mask.data() + s.mask.size(),
                                       std::uint8_t(1));
    saw_class[0] = saw_class[0] || ear < s.mask.size();
    saw_class[1] = saw_class[1] || ear > 0;
  }
  if (!saw_class[0] || !saw_class[1]) {
    throw std::invalid_argument("train: training masks contain only one class");
  }

  TrainStats stats;
  if (cfg.class_balancing) {
    std::vector<LabelMask> masks;
    masks.reserve(data.size());
    for (const auto& s : data) {
      LabelMask m(w, h);
      const std::uint8_t* src = s.mask.plane(0, 0);
      std::copy(src, src + m.values.size(), m.values.begin());
      masks.push_back(std::move(m));
    }
    stats.weights = median_frequency_weights(masks);
  }

  NetworkGradients<T> velocity = zero_gradients(spec, params);
  Rng draw(derive_seed(seed, "train.batch"));
  const int bsz = cfg.batch_size;

  Tensor<T> batch_img(bsz, spec.in_channels, h, w);
  Tensor<std::uint8_t> batch_mask(bsz, 1, h, w);
  const std::size_t img_stride = static_cast<std::size_t>(spec.in_channels) * h * w;
  const std::size_t mask_stride = static_cast<std::size_t>(h) * w;

  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    for (int b = 0; b < bsz; ++b) {
      const std::size_t pick = draw.uniform_index(data.size());
      const auto& s = data[pick];
      std::copy(s.image.data(), s.image.data() + img_stride, batch_img.data() + b * img_stride);
      std::copy(s.mask.data(), s.mask.data() + mask_stride,
                batch_mask.data() + b * mask_stride);
    }

    ForwardCache<T> cache;
    Tensor<T> probs = forward(spec, params, batch_img, Mode::Train, &cache);
    LossResult<T> lr = weighted_cross_entropy(probs, batch_mask, stats.weights);
    NetworkGradients<T> grads = backward(spec, params, cache, lr.grad_logits);
    sgd_step(params, grads, velocity, cfg);

    stats.final_loss = lr.loss;
    if (iter % cfg.log_every == 0 || iter == cfg.max_iterations) {
      TrainLogRecord rec{iter, lr.loss, pixel_accuracy(probs, batch_mask)};
      stats.log.push_back(rec);
      if (on_log) on_log(rec);
    }
  }
  return stats;
}

}  // namespace earseg
