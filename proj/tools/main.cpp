// Command-line front end: train/eval/absorb/infer/stats/energy/ablate over
// one experiment config. Exit codes: 0 success, 1 runtime failure, 2 usage,
// 3 bad config (including scale/shape domain errors), 4 bad file format,
// 5 numeric or invariant fault.

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qbsnn/absorb.hpp"
#include "qbsnn/config.hpp"
#include "qbsnn/energy.hpp"
#include "qbsnn/errors.hpp"
#include "qbsnn/metrics.hpp"
#include "qbsnn/serialize.hpp"

namespace {

int verbosity() {
  const char* env = std::getenv("QBSNN_VERBOSE");
  return env ? std::atoi(env) : 0;
}

struct CliOpts {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string model;
  std::uint64_t seed = 0;
  std::uint64_t timesteps = 0;
  std::uint64_t nmax = 0;
  std::string surrogate;
  std::string neuron;
  bool seed_set = false, timesteps_set = false, nmax_set = false;
};

void add_common(CLI::App* sub, CliOpts& opts) {
  sub->add_option("--config", opts.config, "experiment config file")
      ->required();
  sub->add_option("--out", opts.out, "output directory (overrides config)");
  sub->add_option("--seed", opts.seed, "seed override")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
  sub->add_option("--timesteps", opts.timesteps, "timestep override")
      ->each([&opts](const std::string&) { opts.timesteps_set = true; });
  sub->add_option("--nmax", opts.nmax, "max burst level override")
      ->each([&opts](const std::string&) { opts.nmax_set = true; });
  sub->add_option("--surrogate", opts.surrogate,
                  "surrogate override (relsg-et|box-et|arctan)");
  sub->add_option("--neuron", opts.neuron,
                  "neuron kind override (qblif|ilif|binary)");
}

qbsnn::ExperimentConfig load_config(const CliOpts& opts) {
  qbsnn::KvConfig kv = qbsnn::KvConfig::parse_file(opts.config);
  qbsnn::ExperimentConfig cfg = qbsnn::read_experiment(kv);
  if (opts.seed_set) {
    cfg.seed = opts.seed;
    cfg.network.seed = opts.seed;
  }
  if (opts.timesteps_set) cfg.network.timesteps = opts.timesteps;
  if (opts.nmax_set) {
    cfg.network.neuron.n_max = static_cast<int>(opts.nmax);
    cfg.network.neuron.validate();
  }
  if (!opts.surrogate.empty())
    cfg.surrogate.kind = qbsnn::surrogate_kind_from_name(opts.surrogate);
  if (!opts.neuron.empty())
    cfg.network.neuron.kind = qbsnn::neuron_kind_from_name(opts.neuron);
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  std::filesystem::create_directories(cfg.out_dir);
  return cfg;
}

std::string default_checkpoint(const qbsnn::ExperimentConfig& cfg,
                               const CliOpts& opts) {
  return opts.checkpoint.empty() ? cfg.out_dir + "/checkpoint.qbck"
                                 : opts.checkpoint;
}

std::string default_model(const qbsnn::ExperimentConfig& cfg,
                          const CliOpts& opts) {
  return opts.model.empty() ? cfg.out_dir + "/model.qbam" : opts.model;
}

void write_text(const std::string& path, const std::string& text,
                bool append = false) {
  std::FILE* f = std::fopen(path.c_str(), append ? "ab" : "wb");
  if (!f) throw qbsnn::FormatError(path + ": cannot open for writing");
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
}

// Test-split inputs as one network-ready batch (desk-scale datasets).
qbsnn::Tensor test_inputs(const qbsnn::ExperimentConfig& cfg,
                          const qbsnn::Dataset& ds, std::size_t timesteps) {
  (void)cfg;
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return qbsnn::batch_input(ds, idx, timesteps);
}

int cmd_train(const CliOpts& opts) {
  const qbsnn::ExperimentConfig cfg = load_config(opts);
  const std::uint64_t hash = qbsnn::config_hash(cfg);
  const qbsnn::TrainResult result = qbsnn::train_experiment(cfg);

  std::string log;
  char head[64];
  std::snprintf(head, sizeof head, "# config %016" PRIx64 "\n", hash);
  log += head;
  for (const std::string& line : result.log_lines) log += line + "\n";
  write_text(cfg.out_dir + "/train.log", log, /*append=*/true);

  qbsnn::checkpoint_save(result.net, cfg.out_dir + "/checkpoint.qbck", hash);
  if (verbosity() > 0)
    for (const std::string& line : result.log_lines)
      std::printf("%s\n", line.c_str());
  std::printf("config %016" PRIx64 " final_loss %.10e train_acc %.6f "
              "test_acc %.6f\n",
              hash, result.final_loss, result.final_train_accuracy,
              result.test_accuracy);
  return 0;
}

int cmd_eval(const CliOpts& opts) {
  const qbsnn::ExperimentConfig cfg = load_config(opts);
  std::uint64_t stored_hash = 0;
  const qbsnn::Network net =
      qbsnn::checkpoint_load(default_checkpoint(cfg, opts), &stored_hash);
  const std::uint64_t hash = qbsnn::config_hash(cfg);
  if (stored_hash != hash)
    std::fprintf(stderr,
                 "note: checkpoint was trained under config %016" PRIx64
                 ", evaluating under %016" PRIx64 "\n",
                 stored_hash, hash);
  const qbsnn::Dataset test = qbsnn::build_dataset(cfg.data, cfg.seed, false);
  const double acc = qbsnn::evaluate_accuracy(net, test, cfg.optimizer.batch);
  std::printf("config %016" PRIx64 " test_acc %.6f\n", hash, acc);
  return 0;
}

int cmd_absorb(const CliOpts& opts) {
  const qbsnn::ExperimentConfig cfg = load_config(opts);
  std::uint64_t stored_hash = 0;
  const qbsnn::Network net =
      qbsnn::checkpoint_load(default_checkpoint(cfg, opts), &stored_hash);
  qbsnn::AbsorbedModel model = qbsnn::absorb_scales(net);
  model.source_hash = stored_hash;
  const std::string path = default_model(cfg, opts);
  qbsnn::export_model(model, path);

  // Report the training-vs-absorbed deviation on the test split.
  const qbsnn::Dataset test = qbsnn::build_dataset(cfg.data, cfg.seed, false);
  const qbsnn::Tensor x = test_inputs(cfg, test, net.spec.timesteps);
  const double dev = qbsnn::verify_equivalence(net, model, x);
  std::printf("config %016" PRIx64 " model %s max_logit_deviation %.3e\n",
              qbsnn::config_hash(cfg), path.c_str(), dev);
  return 0;
}

int cmd_infer(const CliOpts& opts) {
  const qbsnn::ExperimentConfig cfg = load_config(opts);
  const qbsnn::AbsorbedModel model =
      qbsnn::import_model(default_model(cfg, opts));
  const qbsnn::Dataset test = qbsnn::build_dataset(cfg.data, cfg.seed, false);
  const qbsnn::Tensor x = test_inputs(cfg, test, model.timesteps);
  qbsnn::OpTrace trace;
  const qbsnn::ForwardResult fr = qbsnn::infer_integer(model, x, &trace);

  std::size_t correct = 0;
  const std::size_t n_classes = model.n_classes();
  for (std::size_t b = 0; b < test.size(); ++b) {
    const double* row = fr.mean_logits.data() + b * n_classes;
    std::size_t argmax = 0;
    for (std::size_t c = 1; c < n_classes; ++c)
      if (row[c] > row[argmax]) argmax = c;
    if (argmax == static_cast<std::size_t>(test.labels[b])) ++correct;
  }
  std::printf("config %016" PRIx64 " test_acc %.6f flops %" PRIu64
              " sops %" PRIu64 " sign_ops %" PRIu64 " scale_muls %" PRIu64
              " samples %" PRIu64 "\n",
              qbsnn::config_hash(cfg),
              static_cast<double>(correct) / static_cast<double>(test.size()),
              trace.flops, trace.sops, trace.sign_ops, trace.scale_muls,
              trace.samples);
  return 0;
}

int cmd_stats(const CliOpts& opts) {
  const qbsnn::ExperimentConfig cfg = load_config(opts);
  const qbsnn::Network net =
      qbsnn::checkpoint_load(default_checkpoint(cfg, opts));
  const qbsnn::Dataset test = qbsnn::build_dataset(cfg.data, cfg.seed, false);
  const qbsnn::Tensor x = test_inputs(cfg, test, net.spec.timesteps);
  std::vector<qbsnn::SpikeTensor> spikes;
  qbsnn::forward_unroll(net, x, qbsnn::RunMode::kEval, nullptr,
                        qbsnn::QuantizerMode::kFloor, &spikes);

  const std::uint64_t hash = qbsnn::config_hash(cfg);
  char buf[256];
  std::snprintf(buf, sizeof buf, "# config %016" PRIx64 "\n", hash);
  std::string dsv = buf;
  dsv += "layer,desc,level,count,probability\n";
  std::printf("# config %016" PRIx64 " (levels pooled over all timesteps)\n",
              hash);
  std::printf("%-6s %-12s %10s %10s %8s %8s %8s\n", "layer", "desc",
              "entropy", "capacity", "levels", "activity", "scale");

  const std::vector<std::size_t> spiking = net.spiking_layers();
  for (std::size_t s = 0; s < spiking.size(); ++s) {
    const qbsnn::Layer& layer = net.layers[spiking[s]];
    const int n_max = layer.neuron.n_max;
    const qbsnn::BurstHistogram hist =
        qbsnn::burst_histogram(spikes[s], n_max, spiking[s]);
    const std::vector<double> probs = hist.probabilities();
    for (int level = 0; level <= n_max; ++level) {
      std::snprintf(buf, sizeof buf, "%zu,%s,%d,%" PRIu64 ",%.10e\n",
                    spiking[s], layer.desc.to_string().c_str(), level,
                    hist.counts[static_cast<std::size_t>(level)],
                    probs[static_cast<std::size_t>(level)]);
      dsv += buf;
    }
    std::printf("%-6zu %-12s %10.4f %10.4f %8d %8.4f %8.4f\n", spiking[s],
                layer.desc.to_string().c_str(), qbsnn::entropy_bits(hist),
                qbsnn::capacity_bound(n_max),
                qbsnn::effective_levels(hist, 1e-2),
                qbsnn::activity_ratio(spikes[s]), layer.neuron.gamma);
  }
  write_text(cfg.out_dir + "/stats.dsv", dsv);
  return 0;
}

int cmd_energy(const CliOpts& opts) {
  const qbsnn::ExperimentConfig cfg = load_config(opts);
  std::uint64_t stored_hash = 0;
  const qbsnn::Network net =
      qbsnn::checkpoint_load(default_checkpoint(cfg, opts), &stored_hash);
  qbsnn::AbsorbedModel model = qbsnn::absorb_scales(net);
  model.source_hash = stored_hash;
  const qbsnn::Dataset test = qbsnn::build_dataset(cfg.data, cfg.seed, false);
  const qbsnn::Tensor x = test_inputs(cfg, test, net.spec.timesteps);
  const qbsnn::EnergyReport report = qbsnn::build_energy_report(model, x);

  const std::uint64_t hash = qbsnn::config_hash(cfg);
  char buf[256];
  std::snprintf(buf, sizeof buf, "# config %016" PRIx64 "\n", hash);
  std::string dsv = buf;
  dsv += "layer,flops,sops,microjoules\n";
  std::printf("# config %016" PRIx64 " (per-sample averages)\n", hash);
  std::printf("%-12s %14s %14s %14s\n", "layer", "flops", "sops", "uJ");
  for (const qbsnn::LayerEnergy& layer : report.per_layer) {
    std::snprintf(buf, sizeof buf, "%s,%.6e,%.6e,%.6e\n", layer.name.c_str(),
                  layer.flops, layer.sops, layer.microjoules);
    dsv += buf;
    std::printf("%-12s %14.1f %14.1f %14.6f\n", layer.name.c_str(),
                layer.flops, layer.sops, layer.microjoules);
  }
  std::snprintf(buf, sizeof buf, "total,%.6e,%.6e,%.6e\n", report.flops,
                report.sops, report.energy_microjoules);
  dsv += buf;
  std::printf("%-12s %14.1f %14.1f %14.6f\n", "total", report.flops,
              report.sops, report.energy_microjoules);
  write_text(cfg.out_dir + "/energy.dsv", dsv);
  return 0;
}

int cmd_ablate(const CliOpts& opts) {
  const qbsnn::ExperimentConfig base = load_config(opts);
  const qbsnn::NeuronKind kinds[] = {qbsnn::NeuronKind::kBinaryLif,
                                     qbsnn::NeuronKind::kIntegerLif,
                                     qbsnn::NeuronKind::kQbLif};
  const qbsnn::SurrogateKind surrogates[] = {qbsnn::SurrogateKind::kBoxEt,
                                             qbsnn::SurrogateKind::kRelsgEt};
  const std::uint64_t hash = qbsnn::config_hash(base);
  char buf[256];
  std::snprintf(buf, sizeof buf, "# config %016" PRIx64 "\n", hash);
  std::string dsv = buf;
  dsv += "neuron,surrogate,final_loss,train_acc,test_acc\n";
  std::printf("# config %016" PRIx64 "\n", hash);
  std::printf("%-8s %-10s %12s %10s %10s\n", "neuron", "surrogate",
              "final_loss", "train_acc", "test_acc");
  for (qbsnn::NeuronKind kind : kinds) {
    for (qbsnn::SurrogateKind surrogate : surrogates) {
      qbsnn::ExperimentConfig cfg = base;
      cfg.network.neuron.kind = kind;
      cfg.surrogate.kind = surrogate;
      const qbsnn::TrainResult r = qbsnn::train_experiment(cfg);
      std::snprintf(buf, sizeof buf, "%s,%s,%.10e,%.6f,%.6f\n",
                    qbsnn::neuron_kind_name(kind),
                    qbsnn::surrogate_kind_name(surrogate), r.final_loss,
                    r.final_train_accuracy, r.test_accuracy);
      dsv += buf;
      std::printf("%-8s %-10s %12.6f %10.6f %10.6f\n",
                  qbsnn::neuron_kind_name(kind),
                  qbsnn::surrogate_kind_name(surrogate), r.final_loss,
                  r.final_train_accuracy, r.test_accuracy);
    }
  }
  write_text(base.out_dir + "/ablate.dsv", dsv);
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"quantized-burst spiking network trainer and analyzer"};
  app.require_subcommand(1);

  CliOpts opts;
  CLI::App* train = app.add_subcommand("train", "train a network");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  CLI::App* absorb =
      app.add_subcommand("absorb", "fold scales into an inference model");
  CLI::App* infer =
      app.add_subcommand("infer", "run the accumulate-only executor");
  CLI::App* stats =
      app.add_subcommand("stats", "burst-level and information statistics");
  CLI::App* energy = app.add_subcommand("energy", "operation/energy report");
  CLI::App* ablate =
      app.add_subcommand("ablate", "neuron x surrogate comparison grid");
  for (CLI::App* sub : {train, eval, absorb, infer, stats, energy, ablate})
    add_common(sub, opts);
  for (CLI::App* sub : {eval, absorb, stats, energy})
    sub->add_option("--checkpoint", opts.checkpoint, "checkpoint path");
  for (CLI::App* sub : {absorb, infer})
    sub->add_option("--model", opts.model, "absorbed model path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*train) return cmd_train(opts);
  if (*eval) return cmd_eval(opts);
  if (*absorb) return cmd_absorb(opts);
  if (*infer) return cmd_infer(opts);
  if (*stats) return cmd_stats(opts);
  if (*energy) return cmd_energy(opts);
  if (*ablate) return cmd_ablate(opts);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const qbsnn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const qbsnn::InvalidScaleError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const qbsnn::ShapeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const qbsnn::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return 4;
  } catch (const qbsnn::NumericFault& e) {
    std::fprintf(stderr, "numeric fault: %s\n", e.what());
    return 5;
  } catch (const qbsnn::InvariantViolation& e) {
    std::fprintf(stderr, "invariant violation: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
