#include "qbsnn/absorb.hpp"

#include <cmath>
#include <cstring>

#include "qbsnn/errors.hpp"
#include "qbsnn/serialize.hpp"

namespace qbsnn {

AbsorbedModel absorb_scales(const Network& net) {
  AbsorbedModel model;
  model.input_shape = net.spec.input_shape;
  model.timesteps = net.spec.timesteps;
  model.n_max = net.spec.neuron.n_max;

  // Scale factor accumulated since the last parameterized layer: the
  // upstream quantizer's output scale and 1/4 per crossed mean-pool.
  double pending = 1.0;
  bool seen_spiking = false;
  for (const Layer& layer : net.layers) {
    AbsorbedLayer out;
    out.desc = layer.desc;
    out.in_shape = layer.in_shape;
    out.out_shape = layer.out_shape;
    out.neuron = layer.neuron;
    out.integer_input = seen_spiking;
    switch (layer.desc.type) {
      case LayerType::kFlatten:
        break;
      case LayerType::kAvgPool:
        pending *= 0.25;  // executor sum-pools; the mean's 1/4 moves here
        break;
      case LayerType::kDense:
      case LayerType::kConv:
      case LayerType::kReadout: {
        out.weights = layer.weights;
        for (double& w : out.weights) w *= pending;
        out.bias = layer.bias;
        if (layer.spiking()) {
          seen_spiking = true;
          pending = layer.neuron.kind == NeuronKind::kQbLif
                        ? layer.neuron.gamma
                        : 1.0;
        } else {
          pending = 1.0;
        }
        break;
      }
    }
    model.layers.push_back(std::move(out));
  }
  return model;
}

namespace {

Tensor slice_step(const Tensor& input, std::size_t t) {
  std::vector<std::size_t> shape(input.shape().begin() + 1,
                                 input.shape().end());
  Tensor out(shape);
  const double* src = input.data() + t * out.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i];
  return out;
}

// Event-driven dense accumulation: every nonzero level k triggers one fused
// accumulation of k*W per outgoing synapse, counted as k SOPs.
Tensor dense_events(const AbsorbedLayer& layer, const Tensor& x,
                    std::uint64_t& sops) {
  const std::size_t batch = x.dim(0);
  const std::size_t n_in = layer.weights.dim(1);
  const std::size_t n_out = layer.weights.dim(0);
  if (x.size() != batch * n_in)
    throw ShapeError("infer: dense input " + x.shape_str());
  Tensor y({batch, n_out});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < n_in; ++j) {
      const double k = x[b * n_in + j];
      if (k == 0.0) continue;
      for (std::size_t o = 0; o < n_out; ++o)
        y[b * n_out + o] += k * layer.weights[o * n_in + j];
      sops += static_cast<std::uint64_t>(k) * n_out;
    }
    if (layer.bias.size() > 0)
      for (std::size_t o = 0; o < n_out; ++o) {
        y[b * n_out + o] += layer.bias[o];
        ++sops;
      }
  }
  return y;
}

Tensor conv_events(const AbsorbedLayer& layer, const Tensor& x,
                   std::uint64_t& sops) {
  const std::size_t batch = x.dim(0);
  const std::size_t c_in = x.dim(1);
  const std::size_t height = x.dim(2);
  const std::size_t width = x.dim(3);
  const std::size_t c_out = layer.weights.dim(0);
  const std::size_t ksize = layer.weights.dim(2);
  const std::size_t pad = (ksize - 1) / 2;
  Tensor y({batch, c_out, height, width});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      for (std::size_t iy = 0; iy < height; ++iy) {
        for (std::size_t ix = 0; ix < width; ++ix) {
          const double k = x[((b * c_in + ci) * height + iy) * width + ix];
          if (k == 0.0) continue;
          const std::uint64_t level = static_cast<std::uint64_t>(k);
          for (std::size_t co = 0; co < c_out; ++co) {
            for (std::size_t ky = 0; ky < ksize; ++ky) {
              const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy + pad) -
                                        static_cast<std::ptrdiff_t>(ky);
              if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(height)) continue;
              for (std::size_t kx = 0; kx < ksize; ++kx) {
                const std::ptrdiff_t ox =
                    static_cast<std::ptrdiff_t>(ix + pad) -
                    static_cast<std::ptrdiff_t>(kx);
                if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(width))
                  continue;
                y[((b * c_out + co) * height + oy) * width + ox] +=
                    k * layer.weights[((co * c_in + ci) * ksize + ky) * ksize +
                                      kx];
                sops += level;
              }
            }
          }
        }
      }
    }
    if (layer.bias.size() > 0)
      for (std::size_t co = 0; co < c_out; ++co)
        for (std::size_t p = 0; p < height * width; ++p) {
          y[(b * c_out + co) * height * width + p] += layer.bias[co];
          ++sops;
        }
  }
  return y;
}

// Integer sum-pool (2x2, stride 2); the mean's 1/4 was folded downstream.
Tensor sum_pool(const Tensor& x, std::uint64_t& sops, bool integer_input) {
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t in_h = x.dim(2);
  const std::size_t in_w = x.dim(3);
  const std::size_t out_h = in_h / 2;
  const std::size_t out_w = in_w / 2;
  Tensor y({batch, channels, out_h, out_w});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t oy = 0; oy < out_h; ++oy)
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          double acc = 0.0;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const double k = x[((b * channels + c) * in_h + 2 * oy + dy) *
                                     in_w +
                                 2 * ox + dx];
              acc += k;
              if (integer_input && k != 0.0)
                sops += static_cast<std::uint64_t>(k);
            }
          y[((b * channels + c) * out_h + oy) * out_w + ox] = acc;
        }
  return y;
}

}  // namespace

ForwardResult infer_integer(const AbsorbedModel& model, const Tensor& input,
                            OpTrace* trace) {
  if (input.rank() < 3)
    throw ShapeError("infer: input must be (T, B, ...), got " +
                     input.shape_str());
  std::vector<std::size_t> feat(input.shape().begin() + 2,
                                input.shape().end());
  if (feat != model.input_shape)
    throw ShapeError("infer: input feature shape of " + input.shape_str() +
                     " does not match the model");
  const std::size_t timesteps = input.dim(0);
  const std::size_t batch = input.dim(1);
  const std::size_t n_layers = model.layers.size();
  const std::size_t n_classes = model.n_classes();

  if (trace) {
    if (trace->per_layer.empty())
      for (const AbsorbedLayer& layer : model.layers)
        trace->per_layer.push_back({layer.desc.to_string(), 0, 0});
    if (trace->per_layer.size() != n_layers)
      throw InvariantViolation("infer: trace layer count mismatch");
    trace->samples += batch;
  }

  // Membrane potential and previous-step firing flag per spiking layer.
  std::vector<Tensor> u(n_layers);
  std::vector<Tensor> fired(n_layers);
  std::vector<std::vector<double>> ladders(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const AbsorbedLayer& layer = model.layers[l];
    if (layer.desc.type != LayerType::kDense &&
        layer.desc.type != LayerType::kConv)
      continue;
    const std::size_t n = Tensor::count(layer.out_shape);
    u[l] = Tensor({batch, n});
    fired[l] = Tensor({batch, n});
    // Precomputed quantizer rungs: level k fires once u reaches k*gamma,
    // so the inference loop compares and never divides.
    const NeuronConfig& cfg = layer.neuron;
    if (cfg.kind != NeuronKind::kBinaryLif) {
      const double gamma = cfg.kind == NeuronKind::kQbLif ? cfg.gamma : 1.0;
      for (int k = 1; k <= cfg.n_max; ++k)
        ladders[l].push_back(gamma * static_cast<double>(k));
    }
  }

  ForwardResult result;
  result.step_logits = Tensor({timesteps, batch, n_classes});
  result.mean_logits = Tensor({batch, n_classes});

  for (std::size_t t = 0; t < timesteps; ++t) {
    Tensor x = slice_step(input, t);
    bool integer = false;  // x currently carries burst levels
    for (std::size_t l = 0; l < n_layers; ++l) {
      const AbsorbedLayer& layer = model.layers[l];
      std::uint64_t sops = 0;
      std::uint64_t flops = 0;
      switch (layer.desc.type) {
        case LayerType::kFlatten: {
          Tensor y({x.dim(0), x.size() / x.dim(0)});
          for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i];
          x = std::move(y);
          break;
        }
        case LayerType::kAvgPool:
          x = sum_pool(x, sops, integer);
          break;
        case LayerType::kReadout: {
          // Readout MACs are booked as real-valued FLOPs by convention,
          // even though the executor still runs them event-driven.
          x = dense_events(layer, x, sops);
          flops += static_cast<std::uint64_t>(batch) *
                   (layer.weights.size() +
                    (layer.bias.size() > 0 ? layer.bias.size() : 0));
          break;
        }
        case LayerType::kDense:
        case LayerType::kConv: {
          Tensor current;
          if (!integer) {
            // First encoding stage: real input, real MACs.
            Layer tmp;
            tmp.desc = layer.desc;
            tmp.weights = layer.weights;
            tmp.bias = layer.bias;
            current = layer_affine(tmp, x);
            const std::uint64_t k = layer.desc.type == LayerType::kConv
                                        ? layer.weights.dim(1) *
                                              layer.weights.dim(2) *
                                              layer.weights.dim(3)
                                        : layer.weights.dim(1);
            flops += static_cast<std::uint64_t>(batch) *
                     Tensor::count(layer.out_shape) *
                     (k + (layer.bias.size() > 0 ? 1 : 0));
          } else if (layer.desc.type == LayerType::kDense) {
            current = dense_events(layer, x, sops);
          } else {
            current = conv_events(layer, x, sops);
          }

          const std::size_t n = Tensor::count(layer.out_shape);
          const NeuronConfig& cfg = layer.neuron;
          Tensor levels({batch, n});
          for (std::size_t i = 0; i < batch * n; ++i) {
            const double um =
                (cfg.beta * u[l][i] + current[i]) *
                (1.0 - cfg.alpha * fired[l][i]);
            if (std::isnan(um))
              throw NumericFault("infer: NaN membrane potential");
            u[l][i] = um;
            double level = 0.0;
            if (cfg.kind == NeuronKind::kBinaryLif) {
              level = um > cfg.v_theta ? 1.0 : 0.0;
            } else {
              for (double rung : ladders[l]) {
                if (um < rung) break;
                level += 1.0;
              }
            }
            if (level < 0.0 || level > static_cast<double>(cfg.n_max) ||
                level != std::floor(level))
              throw InvariantViolation("infer: burst level out of range");
            levels[i] = level;
            fired[l][i] = level > 0.0 ? 1.0 : 0.0;
          }
          std::vector<std::size_t> shape{batch};
          shape.insert(shape.end(), layer.out_shape.begin(),
                       layer.out_shape.end());
          Tensor shaped(shape);
          for (std::size_t i = 0; i < levels.size(); ++i) shaped[i] = levels[i];
          x = std::move(shaped);
          integer = true;
          break;
        }
      }
      if (trace) {
        trace->sops += sops;
        trace->flops += flops;
        trace->per_layer[l].sops += sops;
        trace->per_layer[l].flops += flops;
      }
    }

    if (x.rank() != 2 || x.dim(1) != n_classes)
      throw InvariantViolation("infer: readout produced " + x.shape_str());
    double* row = result.step_logits.data() + t * batch * n_classes;
    for (std::size_t i = 0; i < batch * n_classes; ++i) {
      row[i] = x[i];
      result.mean_logits[i] += x[i] / static_cast<double>(timesteps);
    }
  }
  return result;
}

double verify_equivalence(const Network& net, const AbsorbedModel& model,
                          const Tensor& input) {
  const ForwardResult train_form = forward_unroll(net, input, RunMode::kEval);
  const ForwardResult absorbed = infer_integer(model, input);
  double worst = 0.0;
  for (std::size_t i = 0; i < train_form.step_logits.size(); ++i)
    worst = std::max(worst, std::abs(train_form.step_logits[i] -
                                     absorbed.step_logits[i]));
  return worst;
}

namespace {

constexpr std::uint32_t kModelMagic = 0x4d414251u;  // "QBAM" little-endian
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

void export_model(const AbsorbedModel& model, const std::string& path) {
  ByteWriter w;
  w.u32(kModelMagic);
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  w.u64(model.timesteps);
  w.u32(static_cast<std::uint32_t>(model.n_max));
  w.u64(model.source_hash);
  put_shape(w, model.input_shape);
  for (const AbsorbedLayer& layer : model.layers) {
    w.u8(static_cast<std::uint8_t>(layer.desc.type));
    w.u64(layer.desc.units);
    w.u64(layer.desc.channels);
    w.u64(layer.desc.kernel);
    put_shape(w, layer.in_shape);
    put_shape(w, layer.out_shape);
    put_neuron(w, layer.neuron);
    w.u8(layer.integer_input ? 1 : 0);
    put_tensor(w, layer.weights);
    put_tensor(w, layer.bias);
  }
  ByteWriter out = w;
  out.u64(fnv1a64(w.bytes().data(), w.size()));
  write_file(path, out.bytes());
}

AbsorbedModel import_model(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() < 12)
    throw FormatError(path + ": too short to be a model container");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (fnv1a64(bytes.data(), body) != stored)
    throw FormatError(path + ": checksum mismatch (corrupt or truncated)");

  ByteReader r(bytes.data(), body, path);
  if (r.u32() != kModelMagic)
    throw FormatError(path + ": not a model container");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion)
    throw FormatError(path + ": unsupported container version " +
                      std::to_string(version));
  AbsorbedModel model;
  const std::uint32_t n_layers = r.u32();
  model.timesteps = r.u64();
  model.n_max = static_cast<int>(r.u32());
  model.source_hash = r.u64();
  model.input_shape = get_shape(r);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    AbsorbedLayer layer;
    layer.desc.type = static_cast<LayerType>(r.u8());
    layer.desc.units = r.u64();
    layer.desc.channels = r.u64();
    layer.desc.kernel = r.u64();
    layer.in_shape = get_shape(r);
    layer.out_shape = get_shape(r);
    layer.neuron = get_neuron(r);
    layer.integer_input = r.u8() != 0;
    layer.weights = get_tensor(r);
    layer.bias = get_tensor(r);
    model.layers.push_back(std::move(layer));
  }
  if (r.remaining() != 0)
    throw FormatError(path + ": trailing bytes after model payload");
  return model;
}

}  // namespace qbsnn
