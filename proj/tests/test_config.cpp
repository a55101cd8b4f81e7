#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "qbsnn/config.hpp"
#include "qbsnn/serialize.hpp"
#include "support.hpp"

using namespace qbsnn;
using namespace testsup;

namespace {

const char* kBaseConfig =
    "[network]\n"
    "layers = dense:8, readout:2\n"
    "input = 4\n"
    "\n"
    "[train]\n"
    "epochs = 2\n"
    "batch = 8\n"
    "\n"
    "[data]\n"
    "task = gaussians\n"
    "samples = 32\n"
    "dims = 4\n";

ExperimentConfig parse(const std::string& text) {
  KvConfig kv = KvConfig::parse_text(text, "test");
  ExperimentConfig cfg = read_experiment(kv);
  kv.finish();
  return cfg;
}

}  // namespace

TEST_CASE("experiment defaults match the documented values") {
  const ExperimentConfig cfg = parse(kBaseConfig);
  CHECK(cfg.network.neuron.n_max == 20);
  CHECK(cfg.network.timesteps == 4);
  CHECK(cfg.network.neuron.kind == NeuronKind::kQbLif);
  CHECK(cfg.network.neuron.beta == doctest::Approx(0.5));
  CHECK(cfg.network.neuron.alpha == doctest::Approx(1.0));
  CHECK(cfg.network.gamma_init == doctest::Approx(1.0));
  CHECK(cfg.surrogate.kind == SurrogateKind::kRelsgEt);
  CHECK(cfg.optimizer.lr == doctest::Approx(0.1));
  CHECK(cfg.optimizer.momentum == doctest::Approx(0.9));
  CHECK(cfg.optimizer.cosine);
  CHECK(cfg.seed == 1);
  CHECK(cfg.network.layers.size() == 2);
  CHECK(cfg.network.input_shape == std::vector<std::size_t>{4});
}

TEST_CASE("config text supports sections, comments and CxHxW inputs") {
  const ExperimentConfig cfg = parse(
      "# top comment\n"
      "[network]\n"
      "layers = conv:2k3, avgpool, flatten, dense:4, readout:2\n"
      "input = 2x4x4  ; trailing comment\n"
      "n_max = 5\n"
      "neuron = ilif\n"
      "[train]\n"
      "surrogate = box-et\n"
      "lr = 0.05\n"
      "[data]\n"
      "task = temporal-xor\n");
  CHECK(cfg.network.input_shape == std::vector<std::size_t>{2, 4, 4});
  CHECK(cfg.network.neuron.n_max == 5);
  CHECK(cfg.network.neuron.kind == NeuronKind::kIntegerLif);
  CHECK(cfg.surrogate.kind == SurrogateKind::kBoxEt);
  CHECK(cfg.optimizer.lr == doctest::Approx(0.05));
  CHECK(cfg.data.task == "temporal-xor");
}

TEST_CASE("unknown keys, duplicates and bad values are hard errors") {
  // Unknown keys surface once every reader has run, naming the key.
  KvConfig kv = KvConfig::parse_text(std::string(kBaseConfig) +
                                         "[train]\nlerning_rate = 0.1\n",
                                     "test");
  try {
    read_experiment(kv);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("unknown keys") != std::string::npos);
    CHECK(std::string(e.what()).find("lerning_rate") != std::string::npos);
  }

  CHECK_THROWS_AS(
      KvConfig::parse_text("[train]\nlr = 0.1\nlr = 0.2\n", "test"),
      ConfigError);

  KvConfig bad_value =
      KvConfig::parse_text("[train]\nepochs = soon\n", "test");
  CHECK_THROWS_AS(read_experiment(bad_value), ConfigError);

  KvConfig bad_layer = KvConfig::parse_text(
      "[network]\nlayers = dense:8\ninput = 4\n", "test");
  CHECK_THROWS_AS(read_experiment(bad_layer), ConfigError);

  CHECK_THROWS_AS(KvConfig::parse_text("[network]\nnonsense line\n", "test"),
                  ConfigError);
}

TEST_CASE("config hash is stable and value-sensitive") {
  const std::uint64_t h1 = config_hash(parse(kBaseConfig));
  const std::uint64_t h2 = config_hash(parse(kBaseConfig));
  CHECK(h1 == h2);

  ExperimentConfig tweaked = parse(kBaseConfig);
  tweaked.optimizer.lr = 0.25;
  CHECK(config_hash(tweaked) != h1);
  tweaked = parse(kBaseConfig);
  tweaked.network.neuron.n_max = 5;
  CHECK(config_hash(tweaked) != h1);
  tweaked = parse(kBaseConfig);
  tweaked.seed = 2;
  CHECK(config_hash(tweaked) != h1);

  // The canonical rendering mentions every knob it fingerprints.
  const std::string canon = canonical_config(parse(kBaseConfig));
  for (const char* field : {"layers", "n_max", "lr", "seed", "task"})
    CHECK(canon.find(field) != std::string::npos);
}

TEST_CASE("checkpoints round-trip bit-identically including scales") {
  NetworkSpec spec = make_spec({"dense:6", "dense:4", "readout:2"}, {5}, 3,
                               17);
  Network net = build_network(spec);
  net.layers[0].neuron.gamma = 0.123456789012345;
  net.layers[1].neuron.gamma = 1.75;
  net.layers[0].weights[3] = -0.5;

  const std::string path = "ckpt_rt.qbck";
  checkpoint_save(net, path, 0xabcdef0123456789ull);
  std::uint64_t hash = 0;
  const Network loaded = checkpoint_load(path, &hash);
  CHECK(hash == 0xabcdef0123456789ull);
  REQUIRE(loaded.layers.size() == net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (net.layers[l].weights.size() > 0)
      CHECK(std::memcmp(net.layers[l].weights.data(),
                        loaded.layers[l].weights.data(),
                        net.layers[l].weights.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(&net.layers[l].neuron.gamma,
                      &loaded.layers[l].neuron.gamma, sizeof(double)) == 0);
  }
  CHECK(loaded.spec.timesteps == net.spec.timesteps);

  // Saving the loaded network reproduces the file byte for byte.
  const std::string path2 = "ckpt_rt2.qbck";
  checkpoint_save(loaded, path2, hash);
  CHECK(read_file(path) == read_file(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("checkpoints reject corruption and future versions") {
  NetworkSpec spec = make_spec({"dense:3", "readout:2"}, {2}, 2, 1);
  const Network net = build_network(spec);
  const std::string path = "ckpt_bad.qbck";
  checkpoint_save(net, path, 7);
  std::vector<std::uint8_t> bytes = read_file(path);

  std::vector<std::uint8_t> flipped = bytes;
  flipped[18] ^= 0x01;
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(flipped.data()),
              static_cast<std::streamsize>(flipped.size()));
  }
  CHECK_THROWS_AS(checkpoint_load(path), FormatError);

  std::vector<std::uint8_t> newer = bytes;
  newer[4] = 9;
  const std::uint64_t sum = fnv1a64(newer.data(), newer.size() - 8);
  for (int i = 0; i < 8; ++i)
    newer[newer.size() - 8 + i] =
        static_cast<std::uint8_t>((sum >> (8 * i)) & 0xff);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(newer.data()),
              static_cast<std::streamsize>(newer.size()));
  }
  try {
    checkpoint_load(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("dataset splits derive distinct deterministic seeds") {
  DataConfig data;
  data.task = "gaussians";
  data.params.n_samples = 16;
  data.params.dims = 3;
  const Dataset train_a = build_dataset(data, 5, true);
  const Dataset train_b = build_dataset(data, 5, true);
  const Dataset test = build_dataset(data, 5, false);
  CHECK(std::memcmp(train_a.features.data(), train_b.features.data(),
                    train_a.features.size() * sizeof(double)) == 0);
  CHECK(test.split == "test");
  CHECK(test.size() == 64);  // test_samples default
  bool any_diff = false;
  for (std::size_t i = 0; i < std::min(train_a.features.size(),
                                       test.features.size());
       ++i)
    any_diff |= train_a.features[i] != test.features[i];
  CHECK(any_diff);
}

TEST_CASE("training drives the loss down and logs deterministically") {
  ExperimentConfig cfg = parse(
      "[network]\n"
      "layers = dense:12, readout:2\n"
      "input = 4\n"
      "[train]\n"
      "epochs = 4\n"
      "batch = 16\n"
      "lr = 0.2\n"
      "[data]\n"
      "task = gaussians\n"
      "samples = 64\n"
      "dims = 4\n"
      "separation = 3\n");

  const TrainResult first = train_experiment(cfg);
  CHECK(first.log_lines.size() == 4);
  CHECK(first.final_loss < 0.4);  // well below the ln(2) random baseline
  CHECK(first.test_accuracy > 0.8);
  for (const std::string& line : first.log_lines) {
    CHECK(line.find("loss") != std::string::npos);
    CHECK(line.find("gamma") != std::string::npos);
  }

  const TrainResult second = train_experiment(cfg);
  CHECK(first.log_lines == second.log_lines);
  CHECK(first.final_loss == second.final_loss);
  for (std::size_t l = 0; l < first.net.layers.size(); ++l) {
    if (first.net.layers[l].weights.size() == 0) continue;
    CHECK(std::memcmp(first.net.layers[l].weights.data(),
                      second.net.layers[l].weights.data(),
                      first.net.layers[l].weights.size() * sizeof(double)) ==
          0);
  }

  const Dataset test = build_dataset(cfg.data, cfg.seed, false);
  CHECK(evaluate_accuracy(first.net, test, 16) ==
        doctest::Approx(first.test_accuracy));
}
