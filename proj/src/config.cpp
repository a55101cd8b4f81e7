#include "qbsnn/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "qbsnn/errors.hpp"
#include "qbsnn/rng.hpp"
#include "qbsnn/serialize.hpp"

namespace qbsnn {

namespace {

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

KvConfig KvConfig::parse_text(const std::string& text,
                              const std::string& origin) {
  KvConfig cfg;
  cfg.origin_ = origin;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string line = text.substr(
        pos, eol == std::string::npos ? std::string::npos : eol - pos);
    pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.resize(comment);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": empty section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    Entry e;
    e.section = section;
    e.key = trim(line.substr(0, eq));
    e.value = trim(line.substr(eq + 1));
    if (e.key.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": empty key");
    if (cfg.find(e.section, e.key))
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": duplicate key '" + e.key + "' in [" + e.section +
                        "]");
    cfg.entries_.push_back(std::move(e));
  }
  return cfg;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return parse_text(std::string(bytes.begin(), bytes.end()), path);
}

const KvConfig::Entry* KvConfig::find(const std::string& section,
                                      const std::string& key) const {
  for (const Entry& e : entries_)
    if (e.section == section && e.key == key) return &e;
  return nullptr;
}

bool KvConfig::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string KvConfig::get_str(const std::string& section,
                              const std::string& key,
                              const std::string& fallback) {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  e->used = true;
  return e->value;
}

std::uint64_t KvConfig::get_u64(const std::string& section,
                                const std::string& key,
                                std::uint64_t fallback) {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  e->used = true;
  try {
    std::size_t consumed = 0;
    const std::uint64_t v = std::stoull(e->value, &consumed);
    if (consumed != e->value.size()) throw std::invalid_argument(e->value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": [" + section + "] " + key +
                      " expects an unsigned integer, got '" + e->value + "'");
  }
}

double KvConfig::get_double(const std::string& section, const std::string& key,
                            double fallback) {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  e->used = true;
  try {
    std::size_t consumed = 0;
    const double v = std::stod(e->value, &consumed);
    if (consumed != e->value.size()) throw std::invalid_argument(e->value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": [" + section + "] " + key +
                      " expects a number, got '" + e->value + "'");
  }
}

bool KvConfig::get_bool(const std::string& section, const std::string& key,
                        bool fallback) {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  e->used = true;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  throw ConfigError(origin_ + ": [" + section + "] " + key +
                    " expects a boolean, got '" + e->value + "'");
}

void KvConfig::finish() const {
  std::string unknown;
  for (const Entry& e : entries_)
    if (!e.used) {
      if (!unknown.empty()) unknown += ", ";
      unknown += "[" + e.section + "] " + e.key;
    }
  if (!unknown.empty())
    throw ConfigError(origin_ + ": unknown keys: " + unknown);
}

ExperimentConfig read_experiment(KvConfig& kv) {
  ExperimentConfig cfg;
  cfg.seed = kv.get_u64("run", "seed", 1);
  cfg.out_dir = kv.get_str("run", "out", ".");

  // [network]
  const std::string layers = kv.get_str("network", "layers", "");
  if (layers.empty())
    throw ConfigError("config: [network] layers is required");
  for (const std::string& token : split_list(layers))
    cfg.network.layers.push_back(parse_layer_desc(token));

  const std::string input = kv.get_str("network", "input", "");
  if (input.empty()) throw ConfigError("config: [network] input is required");
  cfg.network.input_shape.clear();
  for (std::size_t start = 0; start <= input.size();) {
    const std::size_t x = input.find('x', start);
    const std::string piece =
        input.substr(start, x == std::string::npos ? std::string::npos
                                                   : x - start);
    try {
      cfg.network.input_shape.push_back(std::stoull(piece));
    } catch (const std::exception&) {
      throw ConfigError("config: bad input shape '" + input + "'");
    }
    if (x == std::string::npos) break;
    start = x + 1;
  }

  cfg.network.timesteps = kv.get_u64("network", "timesteps", 4);
  const std::string encoding = kv.get_str("network", "encoding", "direct");
  if (encoding == "direct")
    cfg.network.encoding = EncodingMode::kDirectRepeat;
  else if (encoding == "frames")
    cfg.network.encoding = EncodingMode::kEventFrames;
  else
    throw ConfigError("config: unknown encoding '" + encoding + "'");

  NeuronConfig& neuron = cfg.network.neuron;
  neuron.kind = neuron_kind_from_name(kv.get_str("network", "neuron", "qblif"));
  neuron.n_max = static_cast<int>(kv.get_u64("network", "n_max", 20));
  neuron.beta = kv.get_double("network", "beta", 0.5);
  neuron.alpha = kv.get_double("network", "alpha", 1.0);
  neuron.v_theta = kv.get_double("network", "v_theta", 1.0);
  cfg.network.gamma_init = kv.get_double("network", "gamma_init", 1.0);
  neuron.gamma = cfg.network.gamma_init;
  cfg.network.bias = kv.get_bool("network", "bias", false);
  cfg.network.seed = cfg.seed;
  neuron.validate();

  // [train]
  cfg.optimizer.lr = kv.get_double("train", "lr", 0.1);
  cfg.optimizer.momentum = kv.get_double("train", "momentum", 0.9);
  cfg.optimizer.cosine = kv.get_bool("train", "cosine", true);
  cfg.optimizer.epochs = kv.get_u64("train", "epochs", 20);
  cfg.optimizer.batch = kv.get_u64("train", "batch", 32);
  cfg.optimizer.train_leak = kv.get_bool("train", "train_leak", false);
  cfg.surrogate.kind =
      surrogate_kind_from_name(kv.get_str("train", "surrogate", "relsg-et"));
  cfg.surrogate.arctan_sharpness =
      kv.get_double("train", "arctan_sharpness", 2.0);

  // [data]
  cfg.data.task = kv.get_str("data", "task", "gaussians");
  cfg.data.params.n_samples = kv.get_u64("data", "samples", 256);
  cfg.data.params.seed = kv.get_u64("data", "seed", 0);
  cfg.data.params.classes = kv.get_u64("data", "classes", 2);
  cfg.data.params.dims = kv.get_u64("data", "dims", 8);
  cfg.data.params.separation = kv.get_double("data", "separation", 4.0);
  cfg.data.params.sigma = kv.get_double("data", "sigma", 1.0);
  cfg.data.params.half_dims = kv.get_u64("data", "half_dims", 4);
  cfg.data.params.noise = kv.get_double("data", "noise", 0.1);
  cfg.data.test_samples = kv.get_u64("data", "test_samples", 64);
  cfg.data.idx_path = kv.get_str("data", "idx", "");
  cfg.data.labels_path = kv.get_str("data", "labels", "");

  kv.finish();
  cfg.network.validate();
  return cfg;
}

std::string canonical_config(const ExperimentConfig& cfg) {
  std::string out;
  auto kv = [&out](const std::string& k, const std::string& v) {
    out += k + " = " + v + "\n";
  };
  auto num = [&](const std::string& k, double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.17g", v);
    kv(k, b);
  };

  std::string layer_list;
  for (const LayerDesc& d : cfg.network.layers) {
    if (!layer_list.empty()) layer_list += ",";
    layer_list += d.to_string();
  }
  kv("network.layers", layer_list);
  std::string input;
  for (std::size_t i = 0; i < cfg.network.input_shape.size(); ++i) {
    if (i) input += "x";
    input += std::to_string(cfg.network.input_shape[i]);
  }
  kv("network.input", input);
  kv("network.timesteps", std::to_string(cfg.network.timesteps));
  kv("network.encoding",
     cfg.network.encoding == EncodingMode::kDirectRepeat ? "direct" : "frames");
  kv("network.neuron", neuron_kind_name(cfg.network.neuron.kind));
  kv("network.n_max", std::to_string(cfg.network.neuron.n_max));
  num("network.beta", cfg.network.neuron.beta);
  num("network.alpha", cfg.network.neuron.alpha);
  num("network.v_theta", cfg.network.neuron.v_theta);
  num("network.gamma_init", cfg.network.gamma_init);
  kv("network.bias", cfg.network.bias ? "true" : "false");
  num("train.lr", cfg.optimizer.lr);
  num("train.momentum", cfg.optimizer.momentum);
  kv("train.cosine", cfg.optimizer.cosine ? "true" : "false");
  kv("train.epochs", std::to_string(cfg.optimizer.epochs));
  kv("train.batch", std::to_string(cfg.optimizer.batch));
  kv("train.train_leak", cfg.optimizer.train_leak ? "true" : "false");
  kv("train.surrogate", surrogate_kind_name(cfg.surrogate.kind));
  num("train.arctan_sharpness", cfg.surrogate.arctan_sharpness);
  kv("data.task", cfg.data.task);
  kv("data.samples", std::to_string(cfg.data.params.n_samples));
  kv("data.seed", std::to_string(cfg.data.params.seed));
  kv("data.classes", std::to_string(cfg.data.params.classes));
  kv("data.dims", std::to_string(cfg.data.params.dims));
  num("data.separation", cfg.data.params.separation);
  num("data.sigma", cfg.data.params.sigma);
  kv("data.half_dims", std::to_string(cfg.data.params.half_dims));
  num("data.noise", cfg.data.params.noise);
  kv("data.test_samples", std::to_string(cfg.data.test_samples));
  kv("data.idx", cfg.data.idx_path);
  kv("data.labels", cfg.data.labels_path);
  kv("run.seed", std::to_string(cfg.seed));
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  return fnv1a64(canonical_config(cfg));
}

namespace {
constexpr std::uint32_t kCheckpointMagic = 0x4b434251u;  // "QBCK"
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void checkpoint_save(const Network& net, const std::string& path,
                     std::uint64_t cfg_hash) {
  ByteWriter w;
  w.u32(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(cfg_hash);

  const NetworkSpec& spec = net.spec;
  w.u32(static_cast<std::uint32_t>(spec.layers.size()));
  for (const LayerDesc& d : spec.layers) {
    w.u8(static_cast<std::uint8_t>(d.type));
    w.u64(d.units);
    w.u64(d.channels);
    w.u64(d.kernel);
  }
  put_shape(w, spec.input_shape);
  w.u64(spec.timesteps);
  w.u8(static_cast<std::uint8_t>(spec.encoding));
  w.u64(spec.seed);
  put_neuron(w, spec.neuron);
  w.u8(spec.bias ? 1 : 0);
  w.f64(spec.gamma_init);

  for (const Layer& layer : net.layers) {
    put_neuron(w, layer.neuron);
    put_tensor(w, layer.weights);
    put_tensor(w, layer.bias);
  }
  ByteWriter out = w;
  out.u64(fnv1a64(w.bytes().data(), w.size()));
  write_file(path, out.bytes());
}

Network checkpoint_load(const std::string& path, std::uint64_t* cfg_hash_out) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() < 16)
    throw FormatError(path + ": too short to be a checkpoint");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (fnv1a64(bytes.data(), body) != stored)
    throw FormatError(path + ": checksum mismatch (corrupt or truncated)");

  ByteReader r(bytes.data(), body, path);
  if (r.u32() != kCheckpointMagic)
    throw FormatError(path + ": not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(version));
  const std::uint64_t cfg_hash = r.u64();
  if (cfg_hash_out) *cfg_hash_out = cfg_hash;

  NetworkSpec spec;
  const std::uint32_t n_layers = r.u32();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerDesc d;
    d.type = static_cast<LayerType>(r.u8());
    d.units = r.u64();
    d.channels = r.u64();
    d.kernel = r.u64();
    spec.layers.push_back(d);
  }
  spec.input_shape = get_shape(r);
  spec.timesteps = r.u64();
  spec.encoding = static_cast<EncodingMode>(r.u8());
  spec.seed = r.u64();
  spec.neuron = get_neuron(r);
  spec.bias = r.u8() != 0;
  spec.gamma_init = r.f64();

  // Rebuild through the regular constructor so the shape chain is
  // revalidated, then overwrite every parameter with the stored values.
  Network net = build_network(spec);
  for (Layer& layer : net.layers) {
    layer.neuron = get_neuron(r);
    Tensor weights = get_tensor(r);
    Tensor bias = get_tensor(r);
    if (!weights.same_shape(layer.weights) || !bias.same_shape(layer.bias))
      throw FormatError(path + ": parameter shapes do not match the spec");
    layer.weights = std::move(weights);
    layer.bias = std::move(bias);
  }
  if (r.remaining() != 0)
    throw FormatError(path + ": trailing bytes after checkpoint payload");
  return net;
}

Dataset build_dataset(const DataConfig& data, std::uint64_t seed, bool train) {
  if (data.task == "idx") {
    if (data.idx_path.empty())
      throw ConfigError("config: [data] idx path required for task idx");
    Dataset ds = load_idx_images(data.idx_path);
    if (!data.labels_path.empty()) {
      ds.labels = load_dsv_labels(data.labels_path);
      int max_label = 0;
      for (int l : ds.labels) max_label = std::max(max_label, l);
      ds.n_classes = static_cast<std::size_t>(max_label) + 1;
    }
    ds.split = train ? "train" : "test";
    ds.validate();
    return ds;
  }
  SynthParams p = data.params;
  const std::uint64_t base = p.seed != 0 ? p.seed : seed + 17;
  p.seed = train ? base : base + 1;
  if (!train) p.n_samples = data.test_samples;
  Dataset ds = generate_synthetic(data.task, p);
  ds.split = train ? "train" : "test";
  ds.validate();
  return ds;
}

TrainResult train_experiment(const ExperimentConfig& cfg) {
  TrainResult result;
  result.net = build_network(cfg.network);
  Network& net = result.net;

  const Dataset train_ds = build_dataset(cfg.data, cfg.seed, true);
  const Dataset test_ds = build_dataset(cfg.data, cfg.seed, false);

  OptimizerState opt = make_optimizer(net, cfg.optimizer.lr,
                                      cfg.optimizer.momentum,
                                      cfg.optimizer.train_leak);
  Gradients grads = make_gradients(net);
  BackwardOptions bopts;
  bopts.train_leak = cfg.optimizer.train_leak;

  Rng order_rng(cfg.seed ^ 0x5bd1e995u);
  std::vector<std::size_t> order(train_ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t batch = std::max<std::size_t>(1, cfg.optimizer.batch);
  for (std::size_t epoch = 0; epoch < cfg.optimizer.epochs; ++epoch) {
    opt.lr = cfg.optimizer.cosine
                 ? cosine_lr(cfg.optimizer.lr, epoch, cfg.optimizer.epochs)
                 : cfg.optimizer.lr;
    order_rng.shuffle(order);

    double epoch_loss = 0.0;
    double epoch_correct = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      const Tensor x = batch_input(train_ds, idx, cfg.network.timesteps);
      const std::vector<int> labels = batch_labels(train_ds, idx);

      Tape tape;
      const ForwardResult fr = forward_unroll(net, x, RunMode::kTrain, &tape);
      const LossResult loss = softmax_cross_entropy(fr.mean_logits, labels);
      grads.zero();
      backward_bptt(net, tape, loss.grad, cfg.surrogate, grads, bopts);
      sgd_step(net, grads, opt);

      epoch_loss += loss.value * static_cast<double>(idx.size());
      epoch_correct += loss.accuracy * static_cast<double>(idx.size());
    }
    const double n = static_cast<double>(train_ds.size());
    result.final_loss = epoch_loss / n;
    result.final_train_accuracy = epoch_correct / n;

    char line[512];
    int len = std::snprintf(line, sizeof line,
                            "epoch %zu step %llu loss %.10e acc %.6f lr %.10e",
                            epoch + 1,
                            static_cast<unsigned long long>(opt.step_count),
                            result.final_loss, result.final_train_accuracy,
                            opt.lr);
    for (const Layer& layer : net.layers) {
      if (!layer.spiking()) continue;
      len += std::snprintf(line + len, sizeof line - len, " gamma %.10e",
                           layer.neuron.gamma);
      if (len >= static_cast<int>(sizeof line)) break;
    }
    result.log_lines.push_back(line);
  }

  result.test_accuracy = evaluate_accuracy(net, test_ds, batch);
  return result;
}

double evaluate_accuracy(const Network& net, const Dataset& ds,
                         std::size_t batch) {
  if (ds.size() == 0) throw ShapeError("evaluate_accuracy: empty dataset");
  const std::size_t step = std::max<std::size_t>(1, batch);
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size(); start += step) {
    const std::size_t end = std::min(ds.size(), start + step);
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    const Tensor x = batch_input(ds, idx, net.spec.timesteps);
    const ForwardResult fr = forward_unroll(net, x, RunMode::kEval);
    const std::size_t n_classes = net.n_classes();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const double* row = fr.mean_logits.data() + b * n_classes;
      std::size_t argmax = 0;
      for (std::size_t c = 1; c < n_classes; ++c)
        if (row[c] > row[argmax]) argmax = c;
      if (argmax == static_cast<std::size_t>(ds.labels[idx[b]])) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace qbsnn
