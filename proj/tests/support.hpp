#pragma once

// Shared helpers for the unit and acceptance suites: tiny-network builders,
// a finite-difference harness for the relaxed-quantizer gradient check, and
// a brute-force spike-event enumerator used as the SOP-count oracle.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qbsnn/absorb.hpp"
#include "qbsnn/bptt.hpp"
#include "qbsnn/layers.hpp"
#include "qbsnn/metrics.hpp"
#include "qbsnn/rng.hpp"

namespace testsup {

inline qbsnn::NetworkSpec make_spec(const std::vector<std::string>& layers,
                                    std::vector<std::size_t> input_shape,
                                    std::size_t timesteps, std::uint64_t seed,
                                    qbsnn::NeuronKind kind = qbsnn::NeuronKind::kQbLif,
                                    int n_max = 20) {
  qbsnn::NetworkSpec spec;
  for (const std::string& token : layers)
    spec.layers.push_back(qbsnn::parse_layer_desc(token));
  spec.input_shape = std::move(input_shape);
  spec.timesteps = timesteps;
  spec.seed = seed;
  spec.neuron.kind = kind;
  spec.neuron.n_max = n_max;
  spec.validate();
  return spec;
}

inline qbsnn::Tensor random_input(std::vector<std::size_t> shape,
                                  std::uint64_t seed, double scale = 1.0) {
  qbsnn::Rng rng(seed);
  qbsnn::Tensor x(std::move(shape));
  for (double& v : x) v = scale * rng.gaussian();
  return x;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes,
                                      std::uint64_t seed) {
  qbsnn::Rng rng(seed);
  std::vector<int> labels(n);
  for (int& l : labels) l = static_cast<int>(rng.below(classes));
  return labels;
}

/// Loss of the clip-relaxed network (the gradient-check reference path).
inline double relaxed_loss(const qbsnn::Network& net, const qbsnn::Tensor& x,
                           const std::vector<int>& labels) {
  const qbsnn::ForwardResult fr = qbsnn::forward_unroll(
      net, x, qbsnn::RunMode::kEval, nullptr,
      qbsnn::QuantizerMode::kClipRelaxed);
  return qbsnn::softmax_cross_entropy(fr.mean_logits, labels).value;
}

/// True when every membrane potential on the tape keeps a safety margin to
/// both clip corners (0 and n_max*gamma), so central differences stay on
/// one smooth piece.
inline bool corner_margins_ok(const qbsnn::Network& net,
                              const qbsnn::Tape& tape, double lo_margin,
                              double hi_margin) {
  for (std::size_t t = 0; t < tape.timesteps; ++t) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      if (!net.layers[l].spiking()) continue;
      const qbsnn::NeuronConfig& cfg = net.layers[l].neuron;
      const double gamma =
          cfg.kind == qbsnn::NeuronKind::kQbLif ? cfg.gamma : 1.0;
      const double hi = static_cast<double>(cfg.n_max) * gamma;
      for (double u : tape.frames[t][l].u) {
        if (std::abs(u) < lo_margin) return false;
        if (std::abs(u - hi) < hi_margin) return false;
      }
    }
  }
  return true;
}

struct FdResult {
  double max_rel_w = 0.0;      // worst relative error over weight entries
  double max_rel_gamma = 0.0;  // worst relative error over layer scales
  bool margins_ok = false;
  std::size_t checked = 0;
};

inline double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / denom;
}

/// Central-difference comparison of every weight gradient and every layer
/// scale gradient against the analytic tape sweep, both on the relaxed
/// quantizer. Gradients below `floor_grad` in both views are skipped (the
/// relative error of a zero-vs-zero comparison is noise).
inline FdResult fd_check(qbsnn::Network& net, const qbsnn::Tensor& x,
                         const std::vector<int>& labels, double step = 1e-4,
                         double floor_grad = 1e-7) {
  FdResult result;

  qbsnn::Tape tape;
  const qbsnn::ForwardResult fr = qbsnn::forward_unroll(
      net, x, qbsnn::RunMode::kTrain, &tape, qbsnn::QuantizerMode::kClipRelaxed);
  result.margins_ok = corner_margins_ok(net, tape, 1e-3, 5e-3);

  const qbsnn::LossResult loss =
      qbsnn::softmax_cross_entropy(fr.mean_logits, labels);
  qbsnn::Gradients grads = qbsnn::make_gradients(net);
  qbsnn::backward_bptt(net, tape, loss.grad, {}, grads);

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    qbsnn::Layer& layer = net.layers[l];
    if (!layer.has_params()) continue;
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      const double keep = layer.weights[i];
      layer.weights[i] = keep + step;
      const double up = relaxed_loss(net, x, labels);
      layer.weights[i] = keep - step;
      const double down = relaxed_loss(net, x, labels);
      layer.weights[i] = keep;
      const double fd = (up - down) / (2.0 * step);
      const double an = grads.layers[l].weights[i];
      ++result.checked;
      if (std::abs(fd) < floor_grad && std::abs(an) < floor_grad) continue;
      result.max_rel_w = std::max(result.max_rel_w, rel_err(an, fd));
    }
    if (layer.spiking() && layer.neuron.kind == qbsnn::NeuronKind::kQbLif) {
      const double keep = layer.neuron.gamma;
      layer.neuron.gamma = keep + step;
      const double up = relaxed_loss(net, x, labels);
      layer.neuron.gamma = keep - step;
      const double down = relaxed_loss(net, x, labels);
      layer.neuron.gamma = keep;
      const double fd = (up - down) / (2.0 * step);
      const double an = grads.layers[l].gamma;
      ++result.checked;
      if (!(std::abs(fd) < floor_grad && std::abs(an) < floor_grad))
        result.max_rel_gamma = std::max(result.max_rel_gamma, rel_err(an, fd));
    }
  }
  return result;
}

/// Brute-force SOP oracle for dense-only networks: walks every spike event
/// of every spiking layer and charges level x fan-out at the consuming
/// layer, plus one accumulation per bias element per sample-step on layers
/// that consume integer input.
inline std::uint64_t enumerate_sops(const qbsnn::Network& net,
                                    const qbsnn::Tensor& input) {
  std::vector<qbsnn::SpikeTensor> spikes;
  qbsnn::forward_unroll(net, input, qbsnn::RunMode::kEval, nullptr,
                        qbsnn::QuantizerMode::kFloor, &spikes);
  const std::size_t timesteps = input.dim(0);
  const std::size_t batch = input.dim(1);

  std::uint64_t sops = 0;
  const std::vector<std::size_t> spiking = net.spiking_layers();
  for (std::size_t s = 0; s < spiking.size(); ++s) {
    const std::size_t consumer_index = spiking[s] + 1;
    const qbsnn::Layer& consumer = net.layers[consumer_index];
    if (consumer.desc.type != qbsnn::LayerType::kDense &&
        consumer.desc.type != qbsnn::LayerType::kReadout)
      throw qbsnn::InvariantViolation("enumerate_sops: dense-only oracle");
    const std::uint64_t fan_out = consumer.weights.dim(0);
    const qbsnn::SpikeTensor& st = spikes[s];
    const double scale = st.scale_attached ? st.scale : 1.0;
    for (double v : st.values) {
      const double level = std::nearbyint(v / scale);
      sops += static_cast<std::uint64_t>(level) * fan_out;
    }
    if (consumer.bias.size() > 0)
      sops += timesteps * batch * consumer.bias.size();
  }
  return sops;
}

}  // namespace testsup
