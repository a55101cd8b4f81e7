#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qbsnn/bptt.hpp"
#include "qbsnn/layers.hpp"
#include "qbsnn/tensor.hpp"

namespace qbsnn {

/// One layer of the inference-form network. Weights already carry every
/// upstream scale (and the 1/4 of any upstream mean-pool, which the
/// executor runs as an integer sum-pool), so the layer consumes raw burst
/// levels and never multiplies an activation by a scale.
struct AbsorbedLayer {
  LayerDesc desc;
  std::vector<std::size_t> in_shape;
  std::vector<std::size_t> out_shape;
  Tensor weights;          // folded: W * (product of absorbed upstream factors)
  Tensor bias;             // biases are additive and are never folded
  NeuronConfig neuron;     // gamma kept only for this layer's own quantizer
  bool integer_input = false;  // input is burst levels rather than real data
};

struct AbsorbedModel {
  std::vector<AbsorbedLayer> layers;
  std::vector<std::size_t> input_shape;
  std::size_t timesteps = 0;
  int n_max = 0;
  std::uint64_t source_hash = 0;  // fingerprint of the originating checkpoint

  std::size_t n_classes() const { return layers.back().out_shape[0]; }
};

/// Operation counts for one inference call (all samples, all timesteps).
/// flops: real-valued MACs (first encoding layer + readout, by accounting
/// convention). sops: synaptic accumulations triggered by spike events
/// (burst level x fan-out, plus one per active bias). sign_ops: signed spike
/// handling; always 0 here since burst levels are unsigned. scale_muls:
/// multiplications of an activation by a quantization scale; the executor
/// is accumulate-only, so anything nonzero is a defect.
struct LayerOps {
  std::string name;
  std::uint64_t flops = 0;
  std::uint64_t sops = 0;
};

struct OpTrace {
  std::uint64_t flops = 0;
  std::uint64_t sops = 0;
  std::uint64_t sign_ops = 0;
  std::uint64_t scale_muls = 0;
  std::uint64_t samples = 0;  // batch size x 1 (timesteps folded into counts)
  std::vector<LayerOps> per_layer;
};

/// Folds each layer's upstream output scale into its weights:
/// what was W(l+1) * (gamma(l) * level) becomes (W(l+1) * gamma(l)) * level.
/// The first layer sees real input and keeps its weights; mean-pools fold
/// their 1/4 downstream; binary and integer LIF layers contribute factor 1.
AbsorbedModel absorb_scales(const Network& net);

/// Accumulate-only forward over `input` of shape (T, B, ...). Spiking
/// activations between layers are integer burst levels in [0, n_max]
/// (violations throw InvariantViolation). If `trace` is non-null the
/// operation counts are accumulated into it.
ForwardResult infer_integer(const AbsorbedModel& model, const Tensor& input,
                            OpTrace* trace = nullptr);

/// Max |training-form logit - absorbed logit| over all steps and samples.
/// A large value is a diagnostic result, not an error.
double verify_equivalence(const Network& net, const AbsorbedModel& model,
                          const Tensor& input);

/// Binary container with magic/version header and trailing checksum.
/// import(export(m)) reproduces m bit-identically.
void export_model(const AbsorbedModel& model, const std::string& path);
AbsorbedModel import_model(const std::string& path);

}  // namespace qbsnn
