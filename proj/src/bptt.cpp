#include "qbsnn/bptt.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "qbsnn/errors.hpp"

namespace qbsnn {

namespace {

// Copies timestep t out of a (T, B, ...) tensor as a (B, ...) tensor.
Tensor slice_step(const Tensor& input, std::size_t t) {
  std::vector<std::size_t> shape(input.shape().begin() + 1,
                                 input.shape().end());
  Tensor out(shape);
  const std::size_t n = out.size();
  const double* src = input.data() + t * n;
  for (std::size_t i = 0; i < n; ++i) out[i] = src[i];
  return out;
}

Tensor reshape_copy(const Tensor& x, const std::vector<std::size_t>& shape) {
  Tensor out(shape);
  if (out.size() != x.size())
    throw ShapeError("reshape: element count mismatch " + x.shape_str());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
  return out;
}

std::vector<std::size_t> with_batch(std::size_t batch,
                                    const std::vector<std::size_t>& feat) {
  std::vector<std::size_t> shape{batch};
  shape.insert(shape.end(), feat.begin(), feat.end());
  return shape;
}

// d(output)/d(membrane) for one spiking unit under the chosen surrogate.
// Burst kinds carry the output scale: S = gamma * quantize(u), so the chain
// rule contributes an extra factor gamma (1 for I-LIF and binary spikes).
double surrogate_du(NeuronKind kind, const SurrogateConfig& sur, double u,
                    const NeuronConfig& cfg) {
  const double gamma = (kind == NeuronKind::kQbLif) ? cfg.gamma : 1.0;
  switch (kind) {
    case NeuronKind::kBinaryLif:
      switch (sur.kind) {
        case SurrogateKind::kBoxEt:
          return binary_box_et_scalar(u, cfg.v_theta);
        case SurrogateKind::kRelsgEt:
          return binary_relsg_et_scalar(u, cfg.v_theta);
        case SurrogateKind::kArctan:
          return arctan_surrogate_scalar(u, cfg.v_theta, sur.arctan_sharpness);
        case SurrogateKind::kExactReference:
          throw ConfigError("the exact reference gradient is not trainable");
      }
      break;
    case NeuronKind::kIntegerLif:
    case NeuronKind::kQbLif:
      switch (sur.kind) {
        case SurrogateKind::kRelsgEt:
          return gamma * relsg_et_scalar(u, gamma, cfg.n_max);
        case SurrogateKind::kBoxEt:
          return gamma * box_et_scalar(u, gamma, cfg.n_max);
        case SurrogateKind::kArctan:
          // Bell centered on the first quantization boundary; kept runnable
          // as a baseline, though it only covers one of n_max thresholds.
          return gamma * arctan_surrogate_scalar(u, gamma, sur.arctan_sharpness);
        case SurrogateKind::kExactReference:
          throw ConfigError("the exact reference gradient is not trainable");
      }
      break;
  }
  throw InvariantViolation("surrogate_du: unhandled neuron kind");
}

}  // namespace

ForwardResult forward_unroll(const Network& net, const Tensor& input,
                             RunMode mode, Tape* tape, QuantizerMode qmode,
                             std::vector<SpikeTensor>* collect_spikes) {
  if (input.rank() < 3)
    throw ShapeError("forward_unroll: input must be (T, B, ...), got " +
                     input.shape_str());
  const std::size_t timesteps = input.dim(0);
  const std::size_t batch = input.dim(1);
  std::vector<std::size_t> feat(input.shape().begin() + 2,
                                input.shape().end());
  if (feat != net.spec.input_shape)
    throw ShapeError("forward_unroll: input feature shape of " +
                     input.shape_str() + " does not match the network");
  if (mode == RunMode::kTrain && tape == nullptr)
    throw InvariantViolation("forward_unroll: train mode requires a tape");

  const std::size_t n_layers = net.layers.size();
  if (tape) {
    tape->timesteps = timesteps;
    tape->batch = batch;
    tape->qmode = qmode;
    tape->frames.assign(timesteps, std::vector<LayerFrame>(n_layers));
  }

  // Membrane state per spiking layer, zero-initialised each call.
  std::vector<MembraneState> states(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l)
    if (net.layers[l].spiking())
      states[l] = MembraneState::zeros({batch, net.layers[l].out_count()});

  if (collect_spikes) {
    collect_spikes->clear();
    for (std::size_t l = 0; l < n_layers; ++l) {
      if (!net.layers[l].spiking()) continue;
      SpikeTensor st;
      st.values = Tensor({timesteps, batch, net.layers[l].out_count()});
      const NeuronConfig& cfg = net.layers[l].neuron;
      st.scale_attached = cfg.kind == NeuronKind::kQbLif;
      st.scale = st.scale_attached ? cfg.gamma : 1.0;
      collect_spikes->push_back(st);
    }
  }

  const std::size_t n_classes = net.n_classes();
  ForwardResult result;
  result.step_logits = Tensor({timesteps, batch, n_classes});
  result.mean_logits = Tensor({batch, n_classes});

  for (std::size_t t = 0; t < timesteps; ++t) {
    Tensor x = slice_step(input, t);
    std::size_t spiking_seen = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const Layer& layer = net.layers[l];
      LayerFrame* frame = tape ? &tape->frames[t][l] : nullptr;
      switch (layer.desc.type) {
        case LayerType::kFlatten:
          x = flatten_forward(x);
          break;
        case LayerType::kAvgPool:
          x = avgpool_forward(x);
          break;
        case LayerType::kReadout: {
          if (frame) frame->input = x;
          x = dense_forward(layer.weights, layer.bias, x);
          break;
        }
        case LayerType::kDense:
        case LayerType::kConv: {
          if (frame) frame->input = x;
          Tensor current = layer_affine(layer, x);
          const std::size_t n = layer.out_count();
          Tensor cur_flat = reshape_copy(current, {batch, n});
          MembraneState& state = states[l];
          const NeuronConfig& cfg = layer.neuron;

          Tensor pre({batch, n});
          Tensor fired({batch, n});
          Tensor u_prev = state.u;
          Tensor levels({batch, n});
          Tensor out_flat({batch, n});

          for (std::size_t i = 0; i < batch * n; ++i) {
            const double f = state.last_spike[i] > 0.0 ? 1.0 : 0.0;
            fired[i] = f;
            const double p = cfg.beta * state.u[i] + cur_flat[i];
            pre[i] = p;
            const double u = p * (1.0 - cfg.alpha * f);
            if (std::isnan(u))
              throw NumericFault("forward_unroll: NaN membrane potential");
            state.u[i] = u;

            double out = 0.0;
            double lev = 0.0;
            if (qmode == QuantizerMode::kClipRelaxed) {
              if (cfg.kind == NeuronKind::kBinaryLif)
                throw ConfigError(
                    "clip relaxation requires a burst neuron kind");
              const double gamma =
                  cfg.kind == NeuronKind::kQbLif ? cfg.gamma : 1.0;
              const double q = u / gamma;
              lev = std::clamp(q, 0.0, static_cast<double>(cfg.n_max));
              out = gamma * lev;
            } else {
              switch (cfg.kind) {
                case NeuronKind::kBinaryLif:
                  lev = state.u[i] > cfg.v_theta ? 1.0 : 0.0;
                  out = lev;
                  break;
                case NeuronKind::kIntegerLif:
                  lev = quantize_burst_scalar(u, 1.0, cfg.n_max);
                  out = lev;
                  break;
                case NeuronKind::kQbLif:
                  lev = quantize_burst_scalar(u, cfg.gamma, cfg.n_max);
                  out = cfg.gamma * lev;
                  break;
              }
            }
            state.last_spike[i] = out;
            levels[i] = lev;
            out_flat[i] = out;
          }

          if (frame) {
            frame->pre = std::move(pre);
            frame->fired_prev = std::move(fired);
            frame->u_prev = std::move(u_prev);
            frame->u = state.u;
            frame->levels = levels;
          }
          if (collect_spikes) {
            Tensor& dst = (*collect_spikes)[spiking_seen].values;
            double* row = dst.data() + t * batch * n;
            for (std::size_t i = 0; i < batch * n; ++i) row[i] = out_flat[i];
          }
          ++spiking_seen;
          x = reshape_copy(out_flat, with_batch(batch, layer.out_shape));
          break;
        }
      }
    }

    // x now holds the per-step logits (B, classes).
    if (x.rank() != 2 || x.dim(1) != n_classes)
      throw InvariantViolation("forward_unroll: readout produced " +
                               x.shape_str());
    double* row = result.step_logits.data() + t * batch * n_classes;
    for (std::size_t i = 0; i < batch * n_classes; ++i) {
      row[i] = x[i];
      result.mean_logits[i] += x[i] / static_cast<double>(timesteps);
    }
  }
  return result;
}

void Gradients::zero() {
  for (LayerGrads& g : layers) {
    g.weights.fill(0.0);
    g.bias.fill(0.0);
    g.gamma = g.beta = g.alpha = 0.0;
  }
}

Gradients make_gradients(const Network& net) {
  Gradients grads;
  grads.layers.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    if (!layer.has_params()) continue;
    grads.layers[l].weights = Tensor(layer.weights.shape());
    if (layer.bias.size() > 0)
      grads.layers[l].bias = Tensor(layer.bias.shape());
  }
  return grads;
}

namespace {

// Dense affine backward: accumulates into dW/db and returns dX.
Tensor dense_backward(const Tensor& weights, const Tensor& x,
                      const Tensor& dy, Tensor& dw, Tensor& db,
                      bool has_bias) {
  const std::size_t batch = x.dim(0);
  const std::size_t n_in = weights.dim(1);
  const std::size_t n_out = weights.dim(0);
  Tensor dx({batch, n_in});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < n_out; ++o) {
      const double g = dy[b * n_out + o];
      if (has_bias) db[o] += g;
      for (std::size_t i = 0; i < n_in; ++i) {
        dw[o * n_in + i] += g * x[b * n_in + i];
        dx[b * n_in + i] += g * weights[o * n_in + i];
      }
    }
  }
  return dx;
}

// Conv affine backward, exact mirror of the forward scatter order.
Tensor conv_backward(const Tensor& kernel, const Tensor& x, const Tensor& dy,
                     Tensor& dk, Tensor& db, bool has_bias) {
  const std::size_t batch = x.dim(0);
  const std::size_t c_in = x.dim(1);
  const std::size_t height = x.dim(2);
  const std::size_t width = x.dim(3);
  const std::size_t c_out = kernel.dim(0);
  const std::size_t ksize = kernel.dim(2);
  const std::size_t pad = (ksize - 1) / 2;
  Tensor dx(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < c_out; ++co) {
      for (std::size_t oy = 0; oy < height; ++oy) {
        for (std::size_t ox = 0; ox < width; ++ox) {
          const double g =
              dy[((b * c_out + co) * height + oy) * width + ox];
          if (has_bias) db[co] += g;
          if (g == 0.0) continue;
          for (std::size_t ci = 0; ci < c_in; ++ci) {
            for (std::size_t ky = 0; ky < ksize; ++ky) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy + ky) -
                  static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height))
                continue;
              for (std::size_t kx = 0; kx < ksize; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox + kx) -
                    static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width))
                  continue;
                const std::size_t xi =
                    ((b * c_in + ci) * height + iy) * width + ix;
                const std::size_t wi =
                    ((co * c_in + ci) * ksize + ky) * ksize + kx;
                dk[wi] += g * x[xi];
                dx[xi] += g * kernel[wi];
              }
            }
          }
        }
      }
    }
  }
  return dx;
}

Tensor avgpool_backward(const Tensor& dy,
                        const std::vector<std::size_t>& in_shape,
                        std::size_t batch) {
  Tensor dx({batch, in_shape[0], in_shape[1], in_shape[2]});
  const std::size_t channels = dy.dim(1);
  const std::size_t out_h = dy.dim(2);
  const std::size_t out_w = dy.dim(3);
  const std::size_t in_h = in_shape[1];
  const std::size_t in_w = in_shape[2];
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
          const double g =
              dy[((b * channels + c) * out_h + y) * out_w + x] * 0.25;
          for (std::size_t dy2 = 0; dy2 < 2; ++dy2)
            for (std::size_t dx2 = 0; dx2 < 2; ++dx2)
              dx[((b * channels + c) * in_h + 2 * y + dy2) * in_w + 2 * x +
                 dx2] = g;
        }
  return dx;
}

}  // namespace

double gamma_gradient_scalar(double u, double gamma, int n_max) {
  const double q = u / gamma;
  if (q < 0.0) return 0.0;
  if (q > static_cast<double>(n_max)) return static_cast<double>(n_max);
  double level = std::floor(q);
  if (level > static_cast<double>(n_max)) level = n_max;
  return level - q;
}

Tensor gamma_gradient(const Tensor& u, double gamma, int n_max) {
  Tensor out(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i)
    out[i] = gamma_gradient_scalar(u[i], gamma, n_max);
  return out;
}

void backward_bptt(const Network& net, const Tape& tape,
                   const Tensor& loss_grad, const SurrogateConfig& surrogate,
                   Gradients& grads, const BackwardOptions& opts) {
  const std::size_t timesteps = tape.timesteps;
  const std::size_t batch = tape.batch;
  const std::size_t n_layers = net.layers.size();
  const std::size_t n_classes = net.n_classes();
  if (loss_grad.rank() != 2 || loss_grad.dim(0) != batch ||
      loss_grad.dim(1) != n_classes)
    throw ShapeError("backward_bptt: loss gradient " + loss_grad.shape_str());
  if (grads.layers.size() != n_layers)
    throw InvariantViolation("backward_bptt: gradient layout mismatch");
  const double inv_t = 1.0 / static_cast<double>(timesteps);
  const bool relaxed = tape.qmode == QuantizerMode::kClipRelaxed;

  // dLoss/dU[t] contribution carried from step t+1 through the leak.
  std::vector<Tensor> carry_du(n_layers);

  for (std::size_t t = timesteps; t-- > 0;) {
    Tensor dx;  // gradient wrt the current layer's output, walking top-down
    for (std::size_t l = n_layers; l-- > 0;) {
      const Layer& layer = net.layers[l];
      const LayerFrame& frame = tape.frames[t][l];
      switch (layer.desc.type) {
        case LayerType::kReadout: {
          Tensor dlogits({batch, n_classes});
          for (std::size_t i = 0; i < batch * n_classes; ++i)
            dlogits[i] = loss_grad[i] * inv_t;
          dx = dense_backward(layer.weights, frame.input, dlogits,
                              grads.layers[l].weights, grads.layers[l].bias,
                              layer.bias.size() > 0);
          break;
        }
        case LayerType::kFlatten:
          dx = reshape_copy(dx, with_batch(batch, layer.in_shape));
          break;
        case LayerType::kAvgPool:
          dx = avgpool_backward(dx, layer.in_shape, batch);
          break;
        case LayerType::kDense:
        case LayerType::kConv: {
          const NeuronConfig& cfg = layer.neuron;
          const std::size_t n = layer.out_count();
          Tensor dout = reshape_copy(dx, {batch, n});
          const double gamma =
              cfg.kind == NeuronKind::kQbLif ? cfg.gamma : 1.0;
          const double hi = static_cast<double>(cfg.n_max) * gamma;

          Tensor du({batch, n});
          double dgamma = 0.0;
          for (std::size_t i = 0; i < batch * n; ++i) {
            const double u = frame.u[i];
            double dsdu;
            if (relaxed) {
              dsdu = (u > 0.0 && u < hi) ? 1.0 : 0.0;
              if (cfg.kind == NeuronKind::kQbLif && u >= hi)
                dgamma += dout[i] * static_cast<double>(cfg.n_max);
            } else {
              dsdu = surrogate_du(cfg.kind, surrogate, u, cfg);
              if (cfg.kind == NeuronKind::kQbLif)
                dgamma +=
                    dout[i] * gamma_gradient_scalar(u, cfg.gamma, cfg.n_max);
            }
            du[i] = dout[i] * dsdu;
            if (carry_du[l].size() > 0) du[i] += carry_du[l][i];
          }
          grads.layers[l].gamma += dgamma;

          Tensor dpre({batch, n});
          Tensor carry({batch, n});
          for (std::size_t i = 0; i < batch * n; ++i) {
            const double gate = 1.0 - cfg.alpha * frame.fired_prev[i];
            dpre[i] = du[i] * gate;
            carry[i] = du[i] * gate * cfg.beta;
            if (opts.train_leak) {
              grads.layers[l].beta += du[i] * gate * frame.u_prev[i];
              grads.layers[l].alpha +=
                  du[i] * (-frame.pre[i]) * frame.fired_prev[i];
            }
          }
          carry_du[l] = (t > 0) ? std::move(carry) : Tensor({0});

          if (layer.desc.type == LayerType::kDense) {
            dx = dense_backward(layer.weights, frame.input, dpre,
                                grads.layers[l].weights, grads.layers[l].bias,
                                layer.bias.size() > 0);
          } else {
            Tensor dpre_shaped =
                reshape_copy(dpre, with_batch(batch, layer.out_shape));
            dx = conv_backward(layer.weights, frame.input, dpre_shaped,
                               grads.layers[l].weights, grads.layers[l].bias,
                               layer.bias.size() > 0);
          }
          break;
        }
      }
    }
  }

  // Stability scaling of the learned-scale gradient, as in learned step
  // size quantization: 1 / sqrt(#neurons * n_max). The relaxed path keeps
  // the exact derivative so finite differences can validate the sweep.
  if (!relaxed) {
    for (std::size_t l = 0; l < n_layers; ++l) {
      const Layer& layer = net.layers[l];
      if (!layer.spiking() || layer.neuron.kind != NeuronKind::kQbLif)
        continue;
      const double scale = 1.0 / std::sqrt(static_cast<double>(layer.out_count()) *
                                           static_cast<double>(layer.neuron.n_max));
      grads.layers[l].gamma *= scale;
    }
  }
}

LossResult softmax_cross_entropy(const Tensor& mean_logits,
                                 const std::vector<int>& labels) {
  if (mean_logits.rank() != 2)
    throw ShapeError("softmax_cross_entropy: " + mean_logits.shape_str());
  const std::size_t batch = mean_logits.dim(0);
  const std::size_t n_classes = mean_logits.dim(1);
  if (labels.size() != batch)
    throw ShapeError("softmax_cross_entropy: labels/batch mismatch");

  LossResult result;
  result.grad = Tensor({batch, n_classes});
  std::size_t correct = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = mean_logits.data() + b * n_classes;
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes)
      throw ConfigError("softmax_cross_entropy: label out of range");
    double max_logit = row[0];
    std::size_t argmax = 0;
    for (std::size_t c = 1; c < n_classes; ++c)
      if (row[c] > max_logit) {
        max_logit = row[c];
        argmax = c;
      }
    if (argmax == static_cast<std::size_t>(label)) ++correct;
    double sum = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c)
      sum += std::exp(row[c] - max_logit);
    const double lse = max_logit + std::log(sum);
    result.value += (lse - row[label]) / static_cast<double>(batch);
    for (std::size_t c = 0; c < n_classes; ++c) {
      const double p = std::exp(row[c] - lse);
      result.grad[b * n_classes + c] =
          (p - (static_cast<std::size_t>(label) == c ? 1.0 : 0.0)) /
          static_cast<double>(batch);
    }
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(batch);
  return result;
}

OptimizerState make_optimizer(const Network& net, double lr, double momentum,
                              bool train_leak) {
  OptimizerState opt;
  opt.lr = lr;
  opt.momentum = momentum;
  opt.train_leak = train_leak;
  opt.velocity.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    if (!layer.has_params()) continue;
    opt.velocity[l].weights = Tensor(layer.weights.shape());
    if (layer.bias.size() > 0) opt.velocity[l].bias = Tensor(layer.bias.shape());
  }
  return opt;
}

void sgd_step(Network& net, const Gradients& grads, OptimizerState& opt) {
  if (grads.layers.size() != net.layers.size() ||
      opt.velocity.size() != net.layers.size())
    throw InvariantViolation("sgd_step: gradient layout mismatch");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Layer& layer = net.layers[l];
    if (!layer.has_params()) continue;
    const LayerGrads& g = grads.layers[l];
    LayerGrads& v = opt.velocity[l];
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      v.weights[i] = opt.momentum * v.weights[i] + g.weights[i];
      layer.weights[i] -= opt.lr * v.weights[i];
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      v.bias[i] = opt.momentum * v.bias[i] + g.bias[i];
      layer.bias[i] -= opt.lr * v.bias[i];
    }
    if (layer.spiking() && layer.neuron.kind == NeuronKind::kQbLif) {
      v.gamma = opt.momentum * v.gamma + g.gamma;
      layer.neuron.gamma =
          std::max(kGammaFloor, layer.neuron.gamma - opt.lr * v.gamma);
    }
    if (opt.train_leak && layer.spiking()) {
      v.beta = opt.momentum * v.beta + g.beta;
      v.alpha = opt.momentum * v.alpha + g.alpha;
      layer.neuron.beta =
          std::clamp(layer.neuron.beta - opt.lr * v.beta, 0.0, 1.0);
      layer.neuron.alpha =
          std::clamp(layer.neuron.alpha - opt.lr * v.alpha, 0.0, 1.0);
    }
  }
  ++opt.step_count;
}

double cosine_lr(double base, std::size_t epoch, std::size_t total) {
  if (total == 0) return base;
  const double frac = static_cast<double>(epoch) / static_cast<double>(total);
  return 0.5 * base * (1.0 + std::cos(3.14159265358979323846 * frac));
}

}  // namespace qbsnn
