#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "earseg/ops.hpp"
#include "earseg/rng.hpp"
#include "earseg/tensor.hpp"

namespace earseg {

// Declarative encoder-decoder description. Convolutions are 3x3/stride 1/
// pad 1; every conv except the final classifier is implicitly followed by
// batch norm and ReLU. Unpool layers pair last-in-first-out with the encoder
// max-pool layers and replay their argmax indices.

enum class LayerKind { Conv, MaxPool, Unpool, Softmax };

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  int filters = 0;          // conv only
  bool bn_relu = false;     // conv only; false on the classifier conv
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  int in_channels = 3;
  int num_classes = 2;
  double scale = 1.0;

  int conv_count() const {
    int k = 0;
    for (const auto& l : layers) k += (l.kind == LayerKind::Conv);
    return k;
  }

  int bn_count() const {
    int k = 0;
    for (const auto& l : layers) k += (l.kind == LayerKind::Conv && l.bn_relu);
    return k;
  }

  // Structural checks: pools/unpools pair LIFO and balance out, the
  // classifier conv carries num_classes filters with no BN/ReLU, and the
  // network ends in exactly one softmax.
  void validate() const {
    if (layers.size() < 2) throw std::invalid_argument("NetworkSpec: too few layers");
    int pools = 0, unpools = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.kind == LayerKind::Softmax && i + 1 != layers.size()) {
        throw std::invalid_argument("NetworkSpec: softmax must be the final layer");
      }
      if (l.kind == LayerKind::Conv && l.filters < 1) {
        throw std::invalid_argument("NetworkSpec: conv layer needs at least one filter");
      }
      if (l.kind == LayerKind::MaxPool) ++pools;
      if (l.kind == LayerKind::Unpool) {
        ++unpools;
        if (unpools > pools) {
          throw std::invalid_argument("NetworkSpec: unpool without a matching earlier max-pool");
        }
      }
    }
    if (pools != unpools) {
      throw std::invalid_argument("NetworkSpec: max-pool/unpool counts must match (" +
                                  std::to_string(pools) + " vs " + std::to_string(unpools) + ")");
    }
    if (layers.back().kind != LayerKind::Softmax) {
      throw std::invalid_argument("NetworkSpec: network must end with softmax");
    }
    const auto& head = layers[layers.size() - 2];
    if (head.kind != LayerKind::Conv || head.filters != num_classes || head.bn_relu) {
      throw std::invalid_argument(
          "NetworkSpec: softmax must be preceded by a plain conv with num_classes filters");
    }
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
      h ^= v;
      h *= 0x100000001b3ULL;
    };
    mix(static_cast<std::uint64_t>(in_channels));
    mix(static_cast<std::uint64_t>(num_classes));
    for (const auto& l : layers) {
      mix(static_cast<std::uint64_t>(l.kind));
      mix(static_cast<std::uint64_t>(l.filters));
      mix(static_cast<std::uint64_t>(l.bn_relu));
    }
    return h;
  }
};

// The 26-conv encoder-decoder with 5 pool/unpool pairs. `scale` multiplies
// every filter count (ceiling), except the 2-filter classifier head; scale
// 1.0 gives the full architecture, smaller values give desk-scale variants.
inline NetworkSpec build_default_spec(double scale = 1.0) {
  if (!(scale > 0.0) || scale > 1.0) {
    throw std::invalid_argument("build_default_spec: scale must be in (0, 1]");
  }
  NetworkSpec spec;
  spec.scale = scale;
  auto conv = [&](int filters) {
    spec.layers.push_back(
        {LayerKind::Conv, static_cast<int>(std::ceil(scale * filters)), true});
  };
  auto pool = [&] { spec.layers.push_back({LayerKind::MaxPool, 0, false}); };
  auto unpool = [&] { spec.layers.push_back({LayerKind::Unpool, 0, false}); };

  // Encoder
  conv(64); conv(64); pool();
  conv(128); conv(128); pool();
  conv(256); conv(256); conv(256); pool();
  conv(512); conv(512); conv(512); pool();
  conv(512); conv(512); conv(512); pool();
  // Decoder
  unpool(); conv(512); conv(512); conv(512);
  unpool(); conv(512); conv(512); conv(256);
  unpool(); conv(256); conv(256); conv(128);
  unpool(); conv(128); conv(64);
  unpool(); conv(64);
  spec.layers.push_back({LayerKind::Conv, spec.num_classes, false});  // classifier head
  spec.layers.push_back({LayerKind::Softmax, 0, false});

  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Learned arrays.

template <typename T = float>
struct ConvParams {
  Tensor<T> weight;       // (outC, inC, 3, 3)
  std::vector<T> bias;    // outC
};

template <typename T = float>
struct BatchNormParams {
  std::vector<T> gamma, beta;
  std::vector<T> running_mean, running_var;
};

template <typename T = float>
struct NetworkParams {
  std::vector<ConvParams<T>> conv;      // one per conv layer, network order
  std::vector<BatchNormParams<T>> bn;   // one per conv-with-bn layer, network order

  bool all_finite() const {
    auto vec_ok = [](const std::vector<T>& v) {
      for (T x : v) {
        if (!std::isfinite(x)) return false;
      }
      return true;
    };
    for (const auto& c : conv) {
      if (!c.weight.all_finite() || !vec_ok(c.bias)) return false;
    }
    for (const auto& b : bn) {
      if (!vec_ok(b.gamma) || !vec_ok(b.beta) || !vec_ok(b.running_mean) ||
          !vec_ok(b.running_var)) {
        return false;
      }
    }
    return true;
  }
};

// Gradients (and SGD velocity) mirror the learned arrays structurally;
// running stats are not parameters and carry no gradient.
template <typename T = float>
struct NetworkGradients {
  struct ConvGrads {
    Tensor<T> weight;
    std::vector<T> bias;
  };
  struct BnGrads {
    std::vector<T> gamma, beta;
  };
  std::vector<ConvGrads> conv;
  std::vector<BnGrads> bn;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Expected filter counts per conv layer, resolving input channels.
inline std::vector<std::pair<int, int>> conv_shapes(const NetworkSpec& spec) {
  std::vector<std::pair<int, int>> shapes;  // (outC, inC)
  int ch = spec.in_channels;
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::Conv) {
      shapes.emplace_back(l.filters, ch);
      ch = l.filters;
    }
  }
  return shapes;
}

// Gaussian init, std sqrt(2/fan_in), zero bias; batch-norm starts as the
// identity transform. Substitutes for the unavailable pretrained weights.
template <typename T = float>
NetworkParams<T> init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  NetworkParams<T> params;
  Rng rng(derive_seed(seed, "init"));

  int ch = spec.in_channels;
  for (const auto& l : spec.layers) {
    if (l.kind != LayerKind::Conv) continue;
    ConvParams<T> cp;
    cp.weight = Tensor<T>(l.filters, ch, 3, 3);
    const double std_dev = std::sqrt(2.0 / (9.0 * ch));
    for (std::size_t i = 0; i < cp.weight.size(); ++i) {
      cp.weight[i] = static_cast<T>(std_dev * rng.normal());
    }
    cp.bias.assign(l.filters, T(0));
    params.conv.push_back(std::move(cp));
    if (l.bn_relu) {
      BatchNormParams<T> bp;
      bp.gamma.assign(l.filters, T(1));
      bp.beta.assign(l.filters, T(0));
      bp.running_mean.assign(l.filters, T(0));
      bp.running_var.assign(l.filters, T(1));
      params.bn.push_back(std::move(bp));
    }
    ch = l.filters;
  }
  return params;
}

template <typename T>
NetworkGradients<T> zero_gradients(const NetworkSpec& spec, const NetworkParams<T>& params) {
  NetworkGradients<T> g;
  for (const auto& c : params.conv) {
    g.conv.push_back({Tensor<T>(c.weight.n(), c.weight.c(), 3, 3),
                      std::vector<T>(c.bias.size(), T(0))});
  }
  for (const auto& b : params.bn) {
    g.bn.push_back({std::vector<T>(b.gamma.size(), T(0)), std::vector<T>(b.beta.size(), T(0))});
  }
  (void)spec;
  return g;
}

template <typename T>
void check_params(const NetworkSpec& spec, const NetworkParams<T>& params) {
  const auto shapes = conv_shapes(spec);
  if (params.conv.size() != shapes.size()) {
    throw std::invalid_argument("network: parameter set has " +
                                std::to_string(params.conv.size()) + " conv layers, spec expects " +
                                std::to_string(shapes.size()));
  }
  if (static_cast<int>(params.bn.size()) != spec.bn_count()) {
    throw std::invalid_argument("network: parameter set has " + std::to_string(params.bn.size()) +
                                " batch-norm layers, spec expects " +
                                std::to_string(spec.bn_count()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& w = params.conv[i].weight;
    if (w.n() != shapes[i].first || w.c() != shapes[i].second || w.h() != 3 || w.w() != 3) {
      throw std::invalid_argument("network: conv layer " + std::to_string(i + 1) +
                                  " weight shape " + w.shape_str() + " does not match spec");
    }
    if (static_cast<int>(params.conv[i].bias.size()) != shapes[i].first) {
      throw std::invalid_argument("network: conv layer " + std::to_string(i + 1) +
                                  " bias length does not match spec");
    }
  }
}

// ---------------------------------------------------------------------------
// Forward / backward.

enum class Mode { Train, Infer };

template <typename T = float>
struct ForwardCache {
  bool training = false;
  std::uint64_t spec_fingerprint = 0;
  std::vector<Tensor<T>> conv_input;     // per conv layer
  std::vector<BatchNormCache<T>> bn;     // per bn layer
  std::vector<Tensor<T>> relu_input;     // per bn layer (post-BN, pre-ReLU)
  std::vector<PoolIndices> pool;         // per max-pool layer, forward order
  std::vector<int> unpool_source;        // per unpool layer: index into pool
  Tensor<T> probabilities;
};

// Runs the network. Train mode advances batch-norm running statistics and
// (with a cache) records everything backward() needs; infer mode is a pure
// function of (params, input). Output spatial size always equals the input's.
template <typename T>
Tensor<T> forward(const NetworkSpec& spec, NetworkParams<T>& params, const Tensor<T>& input,
                  Mode mode, ForwardCache<T>* cache = nullptr) {
  spec.validate();
  check_params(spec, params);
  if (input.c() != spec.in_channels) {
    throw std::invalid_argument("forward: input has " + std::to_string(input.c()) +
                                " channels, spec expects " + std::to_string(spec.in_channels));
  }

  if (cache) {
    *cache = ForwardCache<T>{};
    cache->training = (mode == Mode::Train);
    cache->spec_fingerprint = spec.fingerprint();
  }

  const bool training = (mode == Mode::Train);
  Tensor<T> x = input;
  std::vector<PoolIndices> stack;
  std::vector<int> stack_ids;  // forward-order pool numbers, parallel to `stack`
  int conv_i = 0, bn_i = 0, pool_counter = 0;

  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv: {
        if (cache) cache->conv_input.push_back(x);
        auto& cp = params.conv[conv_i++];
        x = conv2d_forward(x, cp.weight, cp.bias);
        if (l.bn_relu) {
          auto& bp = params.bn[bn_i++];
          BatchNormCache<T> bc;
          x = batchnorm_forward(x, bp.gamma, bp.beta, bp.running_mean, bp.running_var, training,
                                static_cast<T>(kBatchNormEps), static_cast<T>(kBatchNormMomentum),
                                cache ? &bc : nullptr);
          if (cache) {
            cache->bn.push_back(std::move(bc));
            cache->relu_input.push_back(x);
          }
          x = relu(x);
        }
        break;
      }
      case LayerKind::MaxPool: {
        auto [pooled, idx] = maxpool2x2(x);
        x = std::move(pooled);
        stack.push_back(idx);
        stack_ids.push_back(pool_counter++);
        if (cache) cache->pool.push_back(std::move(idx));
        break;
      }
      case LayerKind::Unpool: {
        if (stack.empty()) throw std::logic_error("forward: unpool with empty index stack");
        PoolIndices idx = std::move(stack.back());
        stack.pop_back();
        if (cache) cache->unpool_source.push_back(stack_ids.back());
        stack_ids.pop_back();
        x = unpool2x2(x, idx);
        break;
      }
      case LayerKind::Softmax: {
        x = softmax_channels(x);
        if (cache) cache->probabilities = x;
        break;
      }
    }
  }
  return x;
}

// Infer-mode forward over immutable parameters.
template <typename T>
Tensor<T> forward(const NetworkSpec& spec, const NetworkParams<T>& params,
                  const Tensor<T>& input) {
  NetworkParams<T>& mutable_params = const_cast<NetworkParams<T>&>(params);
  // Infer mode never touches running stats, so the cast is observable-const.
  return forward<T>(spec, mutable_params, input, Mode::Infer, nullptr);
}

// Backpropagates from d(loss)/d(logits) through the whole stack and returns
// gradients structurally congruent to the parameter set. Requires the cache
// of a train-mode forward over the same spec.
template <typename T>
NetworkGradients<T> backward(const NetworkSpec& spec, const NetworkParams<T>& params,
                             const ForwardCache<T>& cache, const Tensor<T>& grad_logits) {
  spec.validate();
  check_params(spec, params);
  if (!cache.training || cache.spec_fingerprint != spec.fingerprint()) {
    throw std::invalid_argument("backward: cache is stale or from a different spec/mode");
  }
  if (cache.conv_input.size() != params.conv.size()) {
    throw std::invalid_argument("backward: cache does not cover every conv layer");
  }

  NetworkGradients<T> grads = zero_gradients(spec, params);
  Tensor<T> g = grad_logits;
  int conv_i = static_cast<int>(params.conv.size());
  int bn_i = static_cast<int>(params.bn.size());
  int pool_i = static_cast<int>(cache.pool.size());
  int unpool_i = static_cast<int>(cache.unpool_source.size());

  for (auto it = spec.layers.rbegin(); it != spec.layers.rend(); ++it) {
    switch (it->kind) {
      case LayerKind::Softmax:
        // backward() receives the gradient w.r.t. logits, so the softmax
        // layer is already accounted for.
        break;
      case LayerKind::Conv: {
        --conv_i;
        if (it->bn_relu) {
          --bn_i;
          g = relu_backward(g, cache.relu_input[bn_i]);
          g = batchnorm_backward(g, cache.bn[bn_i], params.bn[bn_i].gamma, grads.bn[bn_i].gamma,
                                 grads.bn[bn_i].beta);
        }
        auto cg = conv2d_backward(cache.conv_input[conv_i], params.conv[conv_i].weight, g);
        grads.conv[conv_i].weight = std::move(cg.weights);
        grads.conv[conv_i].bias = std::move(cg.bias);
        g = std::move(cg.input);
        break;
      }
      case LayerKind::MaxPool: {
        --pool_i;
        // Gradient of max pooling: route each pooled gradient to its argmax.
        g = unpool2x2(g, cache.pool[pool_i]);
        break;
      }
      case LayerKind::Unpool: {
        --unpool_i;
        const PoolIndices& idx = cache.pool[cache.unpool_source[unpool_i]];
        g = pool_gather(g, idx);
        break;
      }
    }
  }
  return grads;
}

}  // namespace earseg
