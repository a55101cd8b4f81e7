#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qbsnn/neuron.hpp"
#include "qbsnn/rng.hpp"
#include "qbsnn/tensor.hpp"

namespace qbsnn {

enum class LayerType : std::uint8_t {
  kDense = 0,    // affine map followed by a neuron population
  kConv = 1,     // same-padded 2-D convolution followed by neurons
  kAvgPool = 2,  // 2x2 average pooling, stride 2, no parameters
  kFlatten = 3,  // reshape (C, H, W) -> (C*H*W), no parameters
  kReadout = 4,  // final affine map, emits real logits, never spikes
};

const char* layer_type_name(LayerType type);

struct LayerDesc {
  LayerType type = LayerType::kDense;
  std::size_t units = 0;     // dense/readout: output width
  std::size_t channels = 0;  // conv: output channels
  std::size_t kernel = 0;    // conv: kernel size, odd

  std::string to_string() const;
};

/// Parses one descriptor token: "dense:16", "conv:8k3", "avgpool",
/// "flatten", "readout:10". Throws ConfigError on anything else.
LayerDesc parse_layer_desc(const std::string& token);

enum class EncodingMode : std::uint8_t {
  kDirectRepeat = 0,  // static features applied as input current every step
  kEventFrames = 1,   // dataset already carries a time axis
};

struct NetworkSpec {
  std::vector<LayerDesc> layers;
  std::vector<std::size_t> input_shape;  // (features) or (C, H, W)
  std::size_t timesteps = 4;
  EncodingMode encoding = EncodingMode::kDirectRepeat;
  std::uint64_t seed = 0;
  NeuronConfig neuron;    // template applied to every spiking layer
  bool bias = false;      // biases in affine layers (off: absorbable default)
  double gamma_init = 1.0;

  /// Shape-chains the layer list; throws ConfigError naming the offending
  /// layer. The last layer must be a readout and no other layer may be.
  void validate() const;
};

/// One layer with its parameters. `neuron` is meaningful only when
/// spiking() (dense/conv); the readout is a plain affine map.
struct Layer {
  LayerDesc desc;
  std::vector<std::size_t> in_shape;
  std::vector<std::size_t> out_shape;
  Tensor weights;  // dense/readout: (out, in); conv: (Cout, Cin, k, k)
  Tensor bias;     // (out) or (Cout); empty when disabled
  NeuronConfig neuron;

  bool spiking() const {
    return desc.type == LayerType::kDense || desc.type == LayerType::kConv;
  }
  bool has_params() const {
    return spiking() || desc.type == LayerType::kReadout;
  }
  std::size_t out_count() const { return Tensor::count(out_shape); }
  std::size_t in_count() const { return Tensor::count(in_shape); }
  /// Real multiply-accumulates for one forward application per sample.
  std::uint64_t macs_per_step() const;
};

struct Network {
  NetworkSpec spec;
  std::vector<Layer> layers;

  std::size_t n_classes() const { return layers.back().out_shape[0]; }
  /// Indices of spiking layers, in forward order.
  std::vector<std::size_t> spiking_layers() const;
};

/// Allocates layers, resolves the shape chain and initializes parameters
/// (fan-in-scaled uniform weights, gamma = gamma_init). Deterministic in
/// spec.seed.
Network build_network(const NetworkSpec& spec);

// Parameter-free forward primitives shared by training and inference.

/// y = W x (+ b); x is (B, in), result (B, out).
Tensor dense_forward(const Tensor& weights, const Tensor& bias,
                     const Tensor& x);
/// Same-padded stride-1 convolution; x is (B, Cin, H, W), result
/// (B, Cout, H, W).
Tensor conv_forward(const Tensor& kernel, const Tensor& bias, const Tensor& x,
                    std::size_t ksize);
/// 2x2 mean pooling, stride 2; spatial dims must be even.
Tensor avgpool_forward(const Tensor& x);
/// (B, C, H, W) -> (B, C*H*W).
Tensor flatten_forward(const Tensor& x);

/// Affine part of `layer` applied to a batch slice (no neuron update).
Tensor layer_affine(const Layer& layer, const Tensor& x);

/// Spec-level composite: affine map then one neuron step of the configured
/// kind. Only valid for spiking layers.
Tensor layer_forward(const Layer& layer, const Tensor& x,
                     MembraneState& state);

}  // namespace qbsnn
