#include "qbsnn/layers.hpp"

#include <cmath>
#include <cstdio>

#include "qbsnn/errors.hpp"

namespace qbsnn {

const char* layer_type_name(LayerType type) {
  switch (type) {
    case LayerType::kDense: return "dense";
    case LayerType::kConv: return "conv";
    case LayerType::kAvgPool: return "avgpool";
    case LayerType::kFlatten: return "flatten";
    case LayerType::kReadout: return "readout";
  }
  return "?";
}

std::string LayerDesc::to_string() const {
  char buf[64];
  switch (type) {
    case LayerType::kDense:
      std::snprintf(buf, sizeof buf, "dense:%zu", units);
      return buf;
    case LayerType::kConv:
      std::snprintf(buf, sizeof buf, "conv:%zuk%zu", channels, kernel);
      return buf;
    case LayerType::kReadout:
      std::snprintf(buf, sizeof buf, "readout:%zu", units);
      return buf;
    default:
      return layer_type_name(type);
  }
}

LayerDesc parse_layer_desc(const std::string& token) {
  LayerDesc d;
  auto bad = [&]() -> ConfigError {
    return ConfigError("bad layer descriptor '" + token +
                       "' (expected dense:N, conv:CkK, avgpool, flatten or "
                       "readout:N)");
  };
  if (token == "avgpool") {
    d.type = LayerType::kAvgPool;
    return d;
  }
  if (token == "flatten") {
    d.type = LayerType::kFlatten;
    return d;
  }
  const auto colon = token.find(':');
  if (colon == std::string::npos) throw bad();
  const std::string head = token.substr(0, colon);
  const std::string tail = token.substr(colon + 1);
  if (tail.empty()) throw bad();
  try {
    if (head == "dense" || head == "readout") {
      std::size_t pos = 0;
      d.units = std::stoul(tail, &pos);
      if (pos != tail.size() || d.units == 0) throw bad();
      d.type = head == "dense" ? LayerType::kDense : LayerType::kReadout;
      return d;
    }
    if (head == "conv") {
      const auto k = tail.find('k');
      if (k == std::string::npos) throw bad();
      std::size_t pos = 0;
      d.channels = std::stoul(tail.substr(0, k), &pos);
      const std::string ks = tail.substr(k + 1);
      std::size_t pos2 = 0;
      d.kernel = std::stoul(ks, &pos2);
      if (pos != k || pos2 != ks.size() || d.channels == 0) throw bad();
      if (d.kernel % 2 == 0 || d.kernel == 0)
        throw ConfigError("conv kernel size must be odd: '" + token + "'");
      d.type = LayerType::kConv;
      return d;
    }
  } catch (const std::invalid_argument&) {
    throw bad();
  } catch (const std::out_of_range&) {
    throw bad();
  }
  throw bad();
}

namespace {

std::vector<std::size_t> chain_shape(const LayerDesc& d,
                                     const std::vector<std::size_t>& in,
                                     std::size_t index) {
  auto err = [&](const std::string& msg) -> ConfigError {
    return ConfigError("layer " + std::to_string(index) + " (" +
                       d.to_string() + "): " + msg);
  };
  switch (d.type) {
    case LayerType::kDense:
    case LayerType::kReadout:
      if (in.size() != 1)
        throw err("expects a flat input, got rank " +
                  std::to_string(in.size()) + " (insert flatten)");
      return {d.units};
    case LayerType::kConv:
      if (in.size() != 3)
        throw err("expects (C, H, W) input, got rank " +
                  std::to_string(in.size()));
      if (in[1] < d.kernel || in[2] < d.kernel)
        throw err("kernel larger than input");
      return {d.channels, in[1], in[2]};
    case LayerType::kAvgPool:
      if (in.size() != 3)
        throw err("expects (C, H, W) input, got rank " +
                  std::to_string(in.size()));
      if (in[1] % 2 != 0 || in[2] % 2 != 0)
        throw err("spatial dims must be even");
      return {in[0], in[1] / 2, in[2] / 2};
    case LayerType::kFlatten:
      if (in.size() == 1) throw err("input is already flat");
      return {Tensor::count(in)};
  }
  throw err("unknown layer type");
}

}  // namespace

void NetworkSpec::validate() const {
  if (layers.empty()) throw ConfigError("network has no layers");
  if (input_shape.empty()) throw ConfigError("network input shape is empty");
  if (timesteps < 1) throw ConfigError("timesteps must be >= 1");
  neuron.validate();
  if (!(gamma_init > 0.0))
    throw InvalidScaleError("gamma_init must be > 0");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const bool is_readout = layers[i].type == LayerType::kReadout;
    if (is_readout != (i + 1 == layers.size()))
      throw ConfigError(
          "layer " + std::to_string(i) + " (" + layers[i].to_string() +
          "): the readout must be the last layer and the last layer must be "
          "a readout");
  }
  std::vector<std::size_t> shape = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i)
    shape = chain_shape(layers[i], shape, i);
}

std::uint64_t Layer::macs_per_step() const {
  switch (desc.type) {
    case LayerType::kDense:
    case LayerType::kReadout: {
      std::uint64_t macs = static_cast<std::uint64_t>(in_count()) * out_count();
      if (!bias.empty()) macs += out_count();
      return macs;
    }
    case LayerType::kConv: {
      // same padding: one k*k*Cin MAC stencil per output element
      const std::uint64_t per_out =
          static_cast<std::uint64_t>(in_shape[0]) * desc.kernel * desc.kernel;
      std::uint64_t macs = per_out * out_count();
      if (!bias.empty()) macs += out_count();
      return macs;
    }
    default:
      return 0;
  }
}

std::vector<std::size_t> Network::spiking_layers() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].spiking()) idx.push_back(i);
  return idx;
}

Network build_network(const NetworkSpec& spec) {
  spec.validate();
  Network net;
  net.spec = spec;
  Rng master(spec.seed);

  std::vector<std::size_t> shape = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    Layer layer;
    layer.desc = spec.layers[i];
    layer.in_shape = shape;
    layer.out_shape = chain_shape(layer.desc, shape, i);
    layer.neuron = spec.neuron;
    layer.neuron.gamma = spec.gamma_init;

    if (layer.has_params()) {
      std::size_t fan_in = 0;
      if (layer.desc.type == LayerType::kConv) {
        fan_in = layer.in_shape[0] * layer.desc.kernel * layer.desc.kernel;
        layer.weights = Tensor({layer.desc.channels, layer.in_shape[0],
                                layer.desc.kernel, layer.desc.kernel});
      } else {
        fan_in = layer.in_shape[0];
        layer.weights = Tensor({layer.out_shape[0], layer.in_shape[0]});
      }
      Rng rng = master.derive(i);
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& w : layer.weights) w = rng.uniform(-bound, bound);
      if (spec.bias) {
        const std::size_t nb = layer.desc.type == LayerType::kConv
                                   ? layer.desc.channels
                                   : layer.out_shape[0];
        layer.bias = Tensor::zeros({nb});
      }
    }
    shape = layer.out_shape;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Tensor dense_forward(const Tensor& weights, const Tensor& bias,
                     const Tensor& x) {
  if (x.rank() != 2 || weights.rank() != 2 || x.dim(1) != weights.dim(1))
    throw ShapeError("dense_forward: " + x.shape_str() + " vs weights " +
                     weights.shape_str());
  const std::size_t batch = x.dim(0), in = x.dim(1), out = weights.dim(0);
  Tensor y({batch, out});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = x.data() + b * in;
    double* yb = y.data() + b * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* w = weights.data() + o * in;
      double acc = bias.empty() ? 0.0 : bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[i] * xb[i];
      yb[o] = acc;
    }
  }
  return y;
}

Tensor conv_forward(const Tensor& kernel, const Tensor& bias, const Tensor& x,
                    std::size_t ksize) {
  if (x.rank() != 4 || kernel.rank() != 4 || kernel.dim(1) != x.dim(1))
    throw ShapeError("conv_forward: " + x.shape_str() + " vs kernel " +
                     kernel.shape_str());
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2),
                    w = x.dim(3), cout = kernel.dim(0);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ksize / 2);
  Tensor y({batch, cout, h, w});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const double b0 = bias.empty() ? 0.0 : bias[co];
      for (std::size_t oy = 0; oy < h; ++oy) {
        for (std::size_t ox = 0; ox < w; ++ox) {
          double acc = b0;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t ky = 0; ky < ksize; ++ky) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < ksize; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox + kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                acc += kernel[((co * cin + ci) * ksize + ky) * ksize + kx] *
                       x[((b * cin + ci) * h + iy) * w + ix];
              }
            }
          }
          y[((b * cout + co) * h + oy) * w + ox] = acc;
        }
      }
    }
  }
  return y;
}

Tensor avgpool_forward(const Tensor& x) {
  if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
    throw ShapeError("avgpool_forward: need (B, C, evenH, evenW), got " +
                     x.shape_str());
  const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor y({batch, c, oh, ow});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::size_t base = ((b * c + ci) * h + 2 * oy) * w + 2 * ox;
          y[((b * c + ci) * oh + oy) * ow + ox] =
              0.25 * (x[base] + x[base + 1] + x[base + w] + x[base + w + 1]);
        }
  return y;
}

Tensor flatten_forward(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("flatten_forward: " + x.shape_str());
  // reshape only; storage is already row-major
  Tensor out({x.dim(0), x.size() / x.dim(0)});
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
  return out;
}

Tensor layer_affine(const Layer& layer, const Tensor& x) {
  switch (layer.desc.type) {
    case LayerType::kDense:
    case LayerType::kReadout:
      return dense_forward(layer.weights, layer.bias, x);
    case LayerType::kConv:
      return conv_forward(layer.weights, layer.bias, x, layer.desc.kernel);
    case LayerType::kAvgPool:
      return avgpool_forward(x);
    case LayerType::kFlatten:
      return flatten_forward(x);
  }
  throw InvariantViolation("layer_affine: unknown layer type");
}

Tensor layer_forward(const Layer& layer, const Tensor& x,
                     MembraneState& state) {
  if (!layer.spiking())
    throw ConfigError("layer_forward: layer has no neuron population");
  const Tensor current = layer_affine(layer, x);
  // states are stored flat (batch x neurons) regardless of spatial layout
  Tensor flat_current({current.dim(0), current.size() / current.dim(0)});
  for (std::size_t i = 0; i < current.size(); ++i) flat_current[i] = current[i];
  Tensor out_flat;
  switch (layer.neuron.kind) {
    case NeuronKind::kBinaryLif:
      out_flat = lif_step(state, flat_current, layer.neuron);
      break;
    case NeuronKind::kIntegerLif:
      out_flat = ilif_step(state, flat_current, layer.neuron);
      break;
    case NeuronKind::kQbLif:
      out_flat = qblif_step(state, flat_current, layer.neuron);
      break;
  }
  Tensor out(current.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out_flat[i];
  return out;
}

}  // namespace qbsnn
