#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qbsnn/bptt.hpp"
#include "qbsnn/data.hpp"
#include "qbsnn/layers.hpp"
#include "qbsnn/surrogate.hpp"

namespace qbsnn {

/// Sectioned `key = value` text. Every key must be consumed by the reader:
/// finish() turns leftovers into hard errors so a typo cannot silently fall
/// back to a default and corrupt an ablation.
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_text(const std::string& text, const std::string& origin);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback);
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback);
  double get_double(const std::string& section, const std::string& key,
                    double fallback);
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback);

  /// Throws ConfigError listing every key that was never read.
  void finish() const;

 private:
  struct Entry {
    std::string section, key, value;
    mutable bool used = false;
  };
  const Entry* find(const std::string& section, const std::string& key) const;

  std::string origin_;
  std::vector<Entry> entries_;
};

struct OptimizerConfig {
  double lr = 0.1;
  double momentum = 0.9;
  bool cosine = true;
  std::size_t epochs = 20;
  std::size_t batch = 32;
  bool train_leak = false;
};

struct DataConfig {
  std::string task = "gaussians";  // gaussians | temporal-xor | idx
  SynthParams params;              // synthetic tasks
  std::size_t test_samples = 64;
  std::string idx_path;            // task == idx
  std::string labels_path;
};

struct ExperimentConfig {
  NetworkSpec network;
  SurrogateConfig surrogate;
  OptimizerConfig optimizer;
  DataConfig data;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

/// Builds the full experiment from a parsed config, applying defaults and
/// validating the network spec. Unknown keys fail via cfg.finish().
ExperimentConfig read_experiment(KvConfig& kv);

/// Canonical one-line-per-field rendering; its FNV-1a hash is the config
/// fingerprint embedded in every report for provenance.
std::string canonical_config(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// Binary parameter snapshot (magic/version/checksum). Round trips are
/// bit-identical, including every layer's learned scale.
void checkpoint_save(const Network& net, const std::string& path,
                     std::uint64_t cfg_hash);
Network checkpoint_load(const std::string& path,
                        std::uint64_t* cfg_hash_out = nullptr);

/// Materializes the train or test split described by the config.
Dataset build_dataset(const DataConfig& data, std::uint64_t seed, bool train);

struct TrainResult {
  Network net;
  double final_loss = 0.0;
  double final_train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<std::string> log_lines;  // one fixed-format record per epoch
};

/// Deterministic single-threaded training loop: mini-batch SGD with
/// momentum and optional cosine decay, cross-entropy on time-averaged
/// logits. Epoch records carry step, loss, accuracy and each layer's scale.
TrainResult train_experiment(const ExperimentConfig& cfg);

/// Mean argmax accuracy of the training-form network on `ds`.
double evaluate_accuracy(const Network& net, const Dataset& ds,
                         std::size_t batch);

}  // namespace qbsnn
