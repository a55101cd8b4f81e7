#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qbsnn/tensor.hpp"

namespace qbsnn {

/// In-memory dataset. Static data stores features as (N, feature-shape);
/// temporal data as (N, T, feature-shape) with `temporal` set.
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  std::size_t n_classes = 0;
  bool temporal = false;
  std::string split = "train";

  std::size_t size() const { return features.rank() ? features.dim(0) : 0; }
  void validate() const;  // label range + shape uniformity
};

struct SynthParams {
  std::size_t n_samples = 256;
  std::uint64_t seed = 0;
  // gaussians: `classes` clusters in `dims` dimensions, means separated by
  // `separation` along distinct axes, isotropic `sigma` noise.
  std::size_t classes = 2;
  std::size_t dims = 8;
  double separation = 4.0;
  double sigma = 1.0;
  // temporal-xor: two pulse symbols A/B of width half_dims each; the class
  // is whether the two frames repeat the symbol (AA/BB) or alternate
  // (AB/BA), so no single frame carries any class information.
  std::size_t half_dims = 4;
  double noise = 0.1;
};

/// task: "gaussians" or "temporal-xor". Deterministic in params.seed.
Dataset generate_synthetic(const std::string& task, const SynthParams& params);

/// Classic IDX image container (big-endian header, unsigned bytes). Pixels
/// are scaled to [0,1]; labels are zeroed until attached separately.
Dataset load_idx_images(const std::string& path);

/// One integer label per line (delimiter-separated text, '#' comments).
std::vector<int> load_dsv_labels(const std::string& path);

/// Fixed 13-byte event record: little-endian u64 microsecond timestamp,
/// u16 x, u16 y, u8 polarity (0 or 1).
struct Event {
  std::uint64_t t_us = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t polarity = 0;
};

std::vector<Event> load_events(const std::string& path);

/// Accumulates events into `timesteps` equal-duration frames spanning the
/// stream's time range, one channel per polarity: result is
/// (T, 2, height, width) and the total count is conserved.
Tensor bin_events(const std::vector<Event>& events, std::size_t timesteps,
                  std::size_t height, std::size_t width);

/// Replicates static features (N, ...) as constant input current over T
/// steps: result (T, N, ...).
Tensor encode_direct(const Tensor& features, std::size_t timesteps);

/// Gathers `indices` into a network-ready batch (T, B, feature-shape):
/// static data is replicated per step, temporal data transposed from
/// (B, T, ...); for temporal data T must equal the stored time axis.
Tensor batch_input(const Dataset& ds, const std::vector<std::size_t>& indices,
                   std::size_t timesteps);
std::vector<int> batch_labels(const Dataset& ds,
                              const std::vector<std::size_t>& indices);

}  // namespace qbsnn
