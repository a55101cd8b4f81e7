#pragma once

#include <cstdint>
#include <vector>

#include "qbsnn/neuron.hpp"
#include "qbsnn/tensor.hpp"

namespace qbsnn {

/// Empirical distribution of burst levels 0..n_max, pooled over all
/// timesteps, batch entries and neurons of one layer.
struct BurstHistogram {
  std::size_t layer_id = 0;
  std::vector<std::uint64_t> counts;  // index = level, size n_max+1
  std::uint64_t total = 0;

  std::vector<double> probabilities() const;
};

/// Bins spike values per level. Scale-attached values are divided by the
/// scale first; anything that is not an integer level in [0, n_max] after
/// that throws InvariantViolation. An empty tensor has no distribution and
/// throws ShapeError.
BurstHistogram burst_histogram(const SpikeTensor& spikes, int n_max,
                               std::size_t layer_id = 0);

/// Shannon entropy -sum p log2 p with the 0*log0 := 0 convention.
double entropy_bits(const BurstHistogram& hist);

/// Per-timestep information ceiling of an (n_max+1)-level code:
/// log2(n_max+1) bits.
double capacity_bound(int n_max);

/// I(U;S) for the deterministic quantizer: the conditional entropy H(S|U)
/// vanishes, so this is exactly the entropy of the induced level histogram.
double mutual_information_deterministic(const Tensor& u_samples, double gamma,
                                        int n_max);

/// H(U|S) in bits with U discretized into `bins` uniform cells over its
/// empirical range. `levels` must hold the quantizer output per sample.
double conditional_entropy_bits(const Tensor& u_samples, const Tensor& levels,
                                std::size_t bins = 1024);

/// Number of levels whose probability exceeds `threshold` (strictly).
int effective_levels(const BurstHistogram& hist, double threshold);

/// Fraction of (neuron, timestep, batch) slots with a nonzero spike.
double activity_ratio(const SpikeTensor& spikes);

}  // namespace qbsnn
