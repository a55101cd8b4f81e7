#include "qbsnn/neuron.hpp"

#include <cmath>
#include <string>

#include "qbsnn/errors.hpp"

namespace qbsnn {

const char* neuron_kind_name(NeuronKind kind) {
  switch (kind) {
    case NeuronKind::kBinaryLif: return "binary";
    case NeuronKind::kIntegerLif: return "ilif";
    case NeuronKind::kQbLif: return "qblif";
  }
  return "?";
}

NeuronKind neuron_kind_from_name(const std::string& name) {
  if (name == "binary") return NeuronKind::kBinaryLif;
  if (name == "ilif") return NeuronKind::kIntegerLif;
  if (name == "qblif") return NeuronKind::kQbLif;
  throw ConfigError("unknown neuron kind '" + name +
                    "' (expected binary, ilif or qblif)");
}

void NeuronConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw ConfigError("neuron beta must be in [0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ConfigError("neuron alpha must be in [0, 1]");
  if (!(gamma > 0.0))
    throw InvalidScaleError("neuron gamma must be > 0");
  if (kind != NeuronKind::kBinaryLif && n_max < 1)
    throw ConfigError("n_max must be >= 1 for burst neurons");
}

void reset_state(MembraneState& state) {
  state.u.fill(0.0);
  state.last_spike.fill(0.0);
}

int quantize_burst_scalar(double u, double gamma, int n_max) {
  if (!(gamma > 0.0)) throw InvalidScaleError("quantize_burst: gamma <= 0");
  if (!std::isfinite(u))
    throw NumericFault("quantize_burst: non-finite membrane potential");
  const double level = std::floor(u / gamma);
  if (level <= 0.0) return 0;
  if (level >= static_cast<double>(n_max)) return n_max;
  return static_cast<int>(level);
}

Tensor quantize_burst(const Tensor& u, double gamma, int n_max) {
  if (!(gamma > 0.0)) throw InvalidScaleError("quantize_burst: gamma <= 0");
  if (n_max < 1) throw ConfigError("quantize_burst: n_max must be >= 1");
  Tensor out(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i) {
    out[i] = static_cast<double>(quantize_burst_scalar(u[i], gamma, n_max));
  }
  return out;
}

// The gate multiplies the whole bracket, decay term included.
void advance_membrane(MembraneState& state, const Tensor& input_current,
                      double beta, double alpha) {
  check_same_shape(state.u, input_current, "neuron step");
  check_same_shape(state.u, state.last_spike, "neuron step");
  for (std::size_t i = 0; i < state.u.size(); ++i) {
    const double gate = state.last_spike[i] > 0.0 ? 1.0 : 0.0;
    const double u = (beta * state.u[i] + input_current[i]) *
                     (1.0 - alpha * gate);
    if (!std::isfinite(u))
      throw NumericFault("membrane potential diverged (NaN/inf)");
    state.u[i] = u;
  }
}

Tensor lif_step(MembraneState& state, const Tensor& input_current,
                const NeuronConfig& cfg) {
  advance_membrane(state, input_current, cfg.beta, cfg.alpha);
  Tensor spikes(state.u.shape());
  for (std::size_t i = 0; i < state.u.size(); ++i) {
    spikes[i] = state.u[i] > cfg.v_theta ? 1.0 : 0.0;  // strict inequality
    state.last_spike[i] = spikes[i];
  }
  return spikes;
}

Tensor qblif_levels(MembraneState& state, const Tensor& input_current,
                    const NeuronConfig& cfg) {
  advance_membrane(state, input_current, cfg.beta, cfg.alpha);
  Tensor levels(state.u.shape());
  for (std::size_t i = 0; i < state.u.size(); ++i) {
    const int level = quantize_burst_scalar(state.u[i], cfg.gamma, cfg.n_max);
    levels[i] = static_cast<double>(level);
    state.last_spike[i] = cfg.gamma * levels[i];
  }
  return levels;
}

Tensor qblif_step(MembraneState& state, const Tensor& input_current,
                  const NeuronConfig& cfg) {
  Tensor out = qblif_levels(state, input_current, cfg);
  for (double& v : out) v *= cfg.gamma;
  return out;
}

Tensor ilif_step(MembraneState& state, const Tensor& input_current,
                 const NeuronConfig& cfg) {
  NeuronConfig unit = cfg;
  unit.gamma = 1.0;
  return qblif_step(state, input_current, unit);
}

}  // namespace qbsnn
