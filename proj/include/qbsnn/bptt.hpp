#pragma once

#include <cstdint>
#include <vector>

#include "qbsnn/layers.hpp"
#include "qbsnn/neuron.hpp"
#include "qbsnn/surrogate.hpp"
#include "qbsnn/tensor.hpp"

namespace qbsnn {

enum class RunMode { kTrain, kEval };

/// Firing nonlinearity used in the forward pass. kClipRelaxed replaces the
/// floor quantizer with its continuous clip relaxation
///   S = gamma * clip(u / gamma, 0, n_max)
/// which is differentiable away from the clip corners; the backward pass
/// then uses its exact derivatives instead of a surrogate. This is the
/// reference path for finite-difference gradient checks.
enum class QuantizerMode { kFloor, kClipRelaxed };

/// Cached forward values for one (timestep, layer) pair. Only spiking and
/// readout layers populate all fields; parameter-free layers record nothing.
struct LayerFrame {
  Tensor input;       // layer input, shaped (B, ...)
  Tensor pre;         // beta * u_prev + affine(input), flat (B, n)
  Tensor fired_prev;  // 0/1 indicator of s_prev > 0, flat (B, n)
  Tensor u_prev;      // membrane before the step, flat (B, n)
  Tensor u;           // membrane after the step, flat (B, n)
  Tensor levels;      // burst levels / binary spikes / relaxed values
};

/// Record of one unrolled forward pass. The backward sweep walks timesteps
/// in exact reverse order; within one timestep it walks layers top-down.
struct Tape {
  std::size_t timesteps = 0;
  std::size_t batch = 0;
  QuantizerMode qmode = QuantizerMode::kFloor;
  std::vector<std::vector<LayerFrame>> frames;  // [t][layer]
};

struct ForwardResult {
  Tensor step_logits;  // (T, B, classes)
  Tensor mean_logits;  // (B, classes): prediction = argmax of this
};

/// Runs the network over all timesteps of `input` (T, B, feature-shape).
/// In train mode `tape` must be non-null and captures every intermediate.
/// If `collect_spikes` is non-null it receives one SpikeTensor per spiking
/// layer (training form for QB-LIF, raw levels otherwise).
ForwardResult forward_unroll(const Network& net, const Tensor& input,
                             RunMode mode, Tape* tape = nullptr,
                             QuantizerMode qmode = QuantizerMode::kFloor,
                             std::vector<SpikeTensor>* collect_spikes = nullptr);

/// Per-layer gradient accumulators, mirroring Layer's parameters.
struct LayerGrads {
  Tensor weights;
  Tensor bias;
  double gamma = 0.0;
  double beta = 0.0;
  double alpha = 0.0;
};

struct Gradients {
  std::vector<LayerGrads> layers;
  void zero();
};

Gradients make_gradients(const Network& net);

struct BackwardOptions {
  bool train_leak = false;  // also accumulate beta/alpha gradients
};

/// Reverse sweep over the tape. `loss_grad` is dLoss/d(mean_logits), shape
/// (B, classes); the 1/T split across per-step logits happens here. Firing
/// nonlinearities use `surrogate` for d/dU and the learned-step-size rule
/// for d/dgamma (kFloor tapes); kClipRelaxed tapes use the exact relaxed
/// derivatives. The reset indicator is constant in the backward pass.
void backward_bptt(const Network& net, const Tape& tape,
                   const Tensor& loss_grad, const SurrogateConfig& surrogate,
                   Gradients& grads, const BackwardOptions& opts = {});

/// Elementwise straight-through estimate of d(scaled output)/d(gamma):
///   level - u/gamma   for u/gamma in [0, n_max]
///   0                 for u/gamma < 0
///   n_max             for u/gamma > n_max
double gamma_gradient_scalar(double u, double gamma, int n_max);
Tensor gamma_gradient(const Tensor& u, double gamma, int n_max);

/// Softmax cross-entropy on the time-averaged logits, mean over the batch.
struct LossResult {
  double value = 0.0;
  double accuracy = 0.0;
  Tensor grad;  // dLoss/d(mean_logits), (B, classes)
};
LossResult softmax_cross_entropy(const Tensor& mean_logits,
                                 const std::vector<int>& labels);

/// Plain SGD with momentum. Velocity buffers live here, one per layer.
struct OptimizerState {
  double lr = 0.1;
  double momentum = 0.9;
  bool train_leak = false;
  std::uint64_t step_count = 0;
  std::vector<LayerGrads> velocity;
};

OptimizerState make_optimizer(const Network& net, double lr, double momentum,
                              bool train_leak = false);

/// Momentum update then parameter update. gamma is clamped to kGammaFloor
/// afterwards; beta/alpha (when trained) are clamped to [0, 1].
void sgd_step(Network& net, const Gradients& grads, OptimizerState& opt);

/// Cosine decay of the base learning rate over `total` epochs (no warmup).
double cosine_lr(double base, std::size_t epoch, std::size_t total);

}  // namespace qbsnn
