#pragma once

#include <cstdint>
#include <string>

#include "qbsnn/tensor.hpp"

namespace qbsnn {

enum class NeuronKind : std::uint8_t {
  kBinaryLif = 0,  // Heaviside spike, strict U > v_theta
  kIntegerLif = 1, // integer burst levels, scale frozen at 1
  kQbLif = 2,      // quantized burst with learnable scale gamma
};

const char* neuron_kind_name(NeuronKind kind);
NeuronKind neuron_kind_from_name(const std::string& name);

/// Per-layer neuron constants. `gamma` is the learnable quantization scale;
/// it lives here so forward code has a single source for it, while the layer
/// owns its gradient accumulator.
struct NeuronConfig {
  double beta = 0.5;     // decay factor per timestep, in [0, 1]
  double alpha = 1.0;    // soft-reset factor, in [0, 1]
  double v_theta = 1.0;  // binary firing threshold
  int n_max = 20;        // maximum burst level, >= 1 for burst kinds
  double gamma = 1.0;    // quantization scale, > 0
  NeuronKind kind = NeuronKind::kQbLif;

  /// Throws ConfigError if any constant is outside its domain.
  void validate() const;
};

/// gamma is clamped to this floor after every parameter update so the
/// quantizer stays well defined throughout training.
inline constexpr double kGammaFloor = 1e-4;

/// Membrane potential and previous-step output for one neuron population.
/// Both tensors share one fixed shape (batch x neurons) for a whole run.
struct MembraneState {
  Tensor u;
  Tensor last_spike;

  static MembraneState zeros(std::vector<std::size_t> shape) {
    MembraneState s;
    s.u = Tensor::zeros(shape);
    s.last_spike = Tensor::zeros(std::move(shape));
    return s;
  }
};

/// Zeroes membrane potential and spike history in place. Idempotent.
void reset_state(MembraneState& state);

/// Time-indexed burst outputs of one layer. In training form the entries are
/// gamma-scaled reals (integer multiples of `scale`); after absorption they
/// are raw integer levels and `scale_attached` is false.
struct SpikeTensor {
  Tensor values;              // T x batch x neurons
  bool scale_attached = true;
  double scale = 1.0;         // gamma of the emitting layer when attached
};

/// clip(floor(u / gamma), 0, n_max), elementwise. Entries of the result are
/// integers in [0, n_max] stored as doubles. Non-finite inputs raise
/// NumericFault; saturation at the clip bounds is silent and expected.
Tensor quantize_burst(const Tensor& u, double gamma, int n_max);

/// Shared membrane recurrence of every neuron kind:
///   u <- (beta * u_prev + input) * (1 - alpha * [s_prev > 0])
/// The reset gate sees only the firing indicator, not the burst magnitude.
void advance_membrane(MembraneState& state, const Tensor& input_current,
                      double beta, double alpha);

/// Scalar flavor used by the inference executor and tests.
int quantize_burst_scalar(double u, double gamma, int n_max);

/// One Euler step of the binary LIF neuron:
///   u <- (beta * u_prev + input) * (1 - alpha * s_prev)
///   spike = 1 where u > v_theta
/// Returns the binary spike tensor; state is updated in place.
Tensor lif_step(MembraneState& state, const Tensor& input_current,
                const NeuronConfig& cfg);

/// Core of the QB-LIF step: advances the membrane and returns the integer
/// burst levels; last_spike is set to the scaled output gamma * level.
Tensor qblif_levels(MembraneState& state, const Tensor& input_current,
                    const NeuronConfig& cfg);

/// One step of the QB-LIF neuron:
///   out = gamma * clip(floor(u / gamma), 0, n_max)
/// after the membrane recurrence. Returns the scale-attached output; state
/// is updated in place.
Tensor qblif_step(MembraneState& state, const Tensor& input_current,
                  const NeuronConfig& cfg);

/// Integer-LIF baseline: qblif_step with the scale frozen at 1, so the
/// output is the raw integer level.
Tensor ilif_step(MembraneState& state, const Tensor& input_current,
                 const NeuronConfig& cfg);

}  // namespace qbsnn
