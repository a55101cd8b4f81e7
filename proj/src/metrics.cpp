#include "qbsnn/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "qbsnn/errors.hpp"

namespace qbsnn {

std::vector<double> BurstHistogram::probabilities() const {
  std::vector<double> p(counts.size(), 0.0);
  if (total == 0) return p;
  for (std::size_t i = 0; i < counts.size(); ++i)
    p[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return p;
}

BurstHistogram burst_histogram(const SpikeTensor& spikes, int n_max,
                               std::size_t layer_id) {
  if (spikes.values.size() == 0)
    throw ShapeError("burst_histogram: empty spike tensor");
  if (n_max < 1)
    throw ConfigError("burst_histogram: n_max must be >= 1");
  BurstHistogram hist;
  hist.layer_id = layer_id;
  hist.counts.assign(static_cast<std::size_t>(n_max) + 1, 0);
  const double scale = spikes.scale_attached ? spikes.scale : 1.0;
  for (double v : spikes.values) {
    const double q = v / scale;
    const double rounded = std::nearbyint(q);
    if (std::abs(q - rounded) > 1e-6 || rounded < 0.0 ||
        rounded > static_cast<double>(n_max))
      throw InvariantViolation("burst_histogram: value " + std::to_string(v) +
                               " is not a level in [0, " +
                               std::to_string(n_max) + "]");
    ++hist.counts[static_cast<std::size_t>(rounded)];
  }
  hist.total = spikes.values.size();
  return hist;
}

double entropy_bits(const BurstHistogram& hist) {
  if (hist.total == 0)
    throw InvariantViolation("entropy_bits: histogram has no observations");
  double h = 0.0;
  for (std::uint64_t c : hist.counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(hist.total);
    h -= p * std::log2(p);
  }
  return h;
}

double capacity_bound(int n_max) {
  if (n_max < 1) throw ConfigError("capacity_bound: n_max must be >= 1");
  return std::log2(static_cast<double>(n_max) + 1.0);
}

double mutual_information_deterministic(const Tensor& u_samples, double gamma,
                                        int n_max) {
  SpikeTensor levels;
  levels.scale_attached = false;
  levels.scale = 1.0;
  levels.values = Tensor(u_samples.shape());
  for (std::size_t i = 0; i < u_samples.size(); ++i)
    levels.values[i] = quantize_burst_scalar(u_samples[i], gamma, n_max);
  return entropy_bits(burst_histogram(levels, n_max));
}

double conditional_entropy_bits(const Tensor& u_samples, const Tensor& levels,
                                std::size_t bins) {
  if (u_samples.size() == 0)
    throw ShapeError("conditional_entropy_bits: empty sample tensor");
  if (u_samples.size() != levels.size())
    throw ShapeError("conditional_entropy_bits: samples/levels mismatch");
  if (bins < 1)
    throw ConfigError("conditional_entropy_bits: need at least one bin");

  double lo = u_samples[0];
  double hi = u_samples[0];
  for (double u : u_samples) {
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  const double width = hi - lo;

  // joint[(s, bin)] counting; levels are small non-negative integers.
  int max_level = 0;
  for (double s : levels)
    max_level = std::max(max_level, static_cast<int>(std::nearbyint(s)));
  std::vector<std::uint64_t> joint(
      (static_cast<std::size_t>(max_level) + 1) * bins, 0);
  std::vector<std::uint64_t> marginal(static_cast<std::size_t>(max_level) + 1,
                                      0);
  for (std::size_t i = 0; i < u_samples.size(); ++i) {
    std::size_t bin = 0;
    if (width > 0.0) {
      bin = static_cast<std::size_t>((u_samples[i] - lo) / width *
                                     static_cast<double>(bins));
      if (bin >= bins) bin = bins - 1;  // right edge belongs to the last bin
    }
    const std::size_t s =
        static_cast<std::size_t>(std::nearbyint(levels[i]));
    ++joint[s * bins + bin];
    ++marginal[s];
  }

  // H(U|S) = sum_s p(s) * H(U | S=s) over a fixed binning of U.
  const double n = static_cast<double>(u_samples.size());
  double h = 0.0;
  for (std::size_t s = 0; s <= static_cast<std::size_t>(max_level); ++s) {
    if (marginal[s] == 0) continue;
    const double ps = static_cast<double>(marginal[s]) / n;
    double hs = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
      const std::uint64_t c = joint[s * bins + b];
      if (c == 0) continue;
      const double p = static_cast<double>(c) / static_cast<double>(marginal[s]);
      hs -= p * std::log2(p);
    }
    h += ps * hs;
  }
  return h;
}

int effective_levels(const BurstHistogram& hist, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw ConfigError("effective_levels: threshold must lie in (0, 1)");
  int count = 0;
  const std::vector<double> p = hist.probabilities();
  for (double q : p)
    if (q > threshold) ++count;
  return count;
}

double activity_ratio(const SpikeTensor& spikes) {
  if (spikes.values.size() == 0)
    throw ShapeError("activity_ratio: empty spike tensor");
  std::uint64_t active = 0;
  for (double v : spikes.values)
    if (v != 0.0) ++active;
  return static_cast<double>(active) /
         static_cast<double>(spikes.values.size());
}

}  // namespace qbsnn
