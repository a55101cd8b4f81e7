#include "qbsnn/energy.hpp"

#include "qbsnn/errors.hpp"

namespace qbsnn {

OpTrace count_ops(const AbsorbedModel& model, const Tensor& input) {
  OpTrace trace;
  infer_integer(model, input, &trace);
  return trace;
}

double estimate_energy(double flops, double sops, double sign_ops,
                       const EnergyCosts& costs) {
  if (flops < 0.0 || sops < 0.0 || sign_ops < 0.0)
    throw ConfigError("estimate_energy: operation counts must be non-negative");
  const double femtojoules = flops * static_cast<double>(costs.flop_fj) +
                             sops * static_cast<double>(costs.sop_fj) +
                             sign_ops * static_cast<double>(costs.sign_fj);
  return femtojoules * 1e-9;  // 1 uJ = 1e9 fJ
}

EnergyReport build_energy_report(const AbsorbedModel& model,
                                 const Tensor& input,
                                 const EnergyCosts& costs) {
  const OpTrace trace = count_ops(model, input);
  const double samples =
      trace.samples > 0 ? static_cast<double>(trace.samples) : 1.0;
  EnergyReport report;
  report.flops = static_cast<double>(trace.flops) / samples;
  report.sops = static_cast<double>(trace.sops) / samples;
  report.sign_ops = static_cast<double>(trace.sign_ops) / samples;
  report.energy_microjoules =
      estimate_energy(report.flops, report.sops, report.sign_ops, costs);
  for (const LayerOps& ops : trace.per_layer) {
    LayerEnergy layer;
    layer.name = ops.name;
    layer.flops = static_cast<double>(ops.flops) / samples;
    layer.sops = static_cast<double>(ops.sops) / samples;
    layer.microjoules = estimate_energy(layer.flops, layer.sops, 0.0, costs);
    report.per_layer.push_back(layer);
  }
  return report;
}

}  // namespace qbsnn
