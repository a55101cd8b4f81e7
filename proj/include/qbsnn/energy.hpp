#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qbsnn/absorb.hpp"

namespace qbsnn {

/// Per-operation energy costs in femtojoules. Integer femtojoules keep the
/// headline picojoule figures exact (12.5 pJ = 12500 fJ); this record is the
/// single place the constants live.
struct EnergyCosts {
  std::uint64_t flop_fj = 12500;  // one 32-bit multiply-accumulate
  std::uint64_t sop_fj = 77;      // one synaptic accumulation
  std::uint64_t sign_fj = 3700;   // one signed-spike handling op
};

struct LayerEnergy {
  std::string name;
  double flops = 0.0;
  double sops = 0.0;
  double microjoules = 0.0;
};

/// Per-sample operation counts and the resulting energy estimate.
struct EnergyReport {
  double flops = 0.0;
  double sops = 0.0;
  double sign_ops = 0.0;
  double energy_microjoules = 0.0;
  std::vector<LayerEnergy> per_layer;
};

/// Runs the accumulate-only executor over `input` (T, B, ...) and returns
/// the raw operation totals for the whole call.
OpTrace count_ops(const AbsorbedModel& model, const Tensor& input);

/// Weighted sum of the counts, in microjoules.
double estimate_energy(double flops, double sops, double sign_ops,
                       const EnergyCosts& costs = {});

/// Per-sample energy breakdown for `input` (counts divided by batch size).
EnergyReport build_energy_report(const AbsorbedModel& model,
                                 const Tensor& input,
                                 const EnergyCosts& costs = {});

}  // namespace qbsnn
