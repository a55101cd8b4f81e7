#include "qbsnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "qbsnn/errors.hpp"
#include "qbsnn/rng.hpp"
#include "qbsnn/serialize.hpp"

namespace qbsnn {

void Dataset::validate() const {
  if (features.rank() < 2)
    throw ShapeError("dataset: features must be at least (N, d), got " +
                     features.shape_str());
  if (labels.size() != size())
    throw ShapeError("dataset: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(size()) + " samples");
  for (int label : labels)
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes)
      throw ConfigError("dataset: label " + std::to_string(label) +
                        " outside [0, " + std::to_string(n_classes) + ")");
}

namespace {

Dataset make_gaussians(const SynthParams& p) {
  if (p.classes < 2 || p.classes > p.dims)
    throw ConfigError("gaussians: need 2 <= classes <= dims");
  Rng rng(p.seed);
  Dataset ds;
  ds.n_classes = p.classes;
  ds.features = Tensor({p.n_samples, p.dims});
  ds.labels.resize(p.n_samples);

  // Balanced labels, then shuffled so mini-batches stay mixed.
  std::vector<std::size_t> order(p.n_samples);
  for (std::size_t i = 0; i < p.n_samples; ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t i = 0; i < p.n_samples; ++i) {
    const int label = static_cast<int>(order[i] % p.classes);
    ds.labels[i] = label;
    // Mean of class c sits at separation * e_c.
    for (std::size_t d = 0; d < p.dims; ++d) {
      double v = p.sigma * rng.gaussian();
      if (d == static_cast<std::size_t>(label)) v += p.separation;
      ds.features[i * p.dims + d] = v;
    }
  }
  return ds;
}

Dataset make_temporal_xor(const SynthParams& p) {
  if (p.half_dims < 1) throw ConfigError("temporal-xor: half_dims must be >= 1");
  Rng rng(p.seed);
  const std::size_t dims = 2 * p.half_dims;
  Dataset ds;
  ds.n_classes = 2;
  ds.temporal = true;
  ds.features = Tensor({p.n_samples, 2, dims});
  ds.labels.resize(p.n_samples);

  std::vector<std::size_t> order(p.n_samples);
  for (std::size_t i = 0; i < p.n_samples; ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t i = 0; i < p.n_samples; ++i) {
    // Four sequences in rotation: AA, BB (class 0), AB, BA (class 1). Each
    // frame is A or B with equal probability in both classes, so per-frame
    // marginals are class-independent and only the order is informative.
    // Both symbols pulse the same (low-half) input lines and differ only in
    // amplitude (A = 1, B = 2): recovering the order requires holding a
    // graded magnitude across the step, not just a pulse location.
    const std::size_t variant = order[i] % 4;
    const int label = variant < 2 ? 0 : 1;
    const bool first_is_a = (variant == 0 || variant == 2);
    const bool second_is_a = (variant == 0 || variant == 3);
    ds.labels[i] = label;
    for (std::size_t f = 0; f < 2; ++f) {
      const bool is_a = f == 0 ? first_is_a : second_is_a;
      const double amplitude = is_a ? 1.0 : 2.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const bool in_pulse = d < p.half_dims;
        ds.features[(i * 2 + f) * dims + d] =
            (in_pulse ? amplitude : 0.0) + p.noise * rng.gaussian();
      }
    }
  }
  return ds;
}

}  // namespace

Dataset generate_synthetic(const std::string& task, const SynthParams& params) {
  if (params.n_samples == 0)
    throw ConfigError("generate_synthetic: n_samples must be > 0");
  if (task == "gaussians") return make_gaussians(params);
  if (task == "temporal-xor") return make_temporal_xor(params);
  throw ConfigError("generate_synthetic: unknown task '" + task + "'");
}

namespace {

std::uint32_t read_be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) |
         static_cast<std::uint32_t>(p[3]);
}

}  // namespace

Dataset load_idx_images(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() < 16) throw FormatError(path + ": truncated IDX header");
  const std::uint32_t magic = read_be32(bytes.data());
  if (magic != 0x00000803u)
    throw FormatError(path + ": bad IDX magic " + std::to_string(magic) +
                      " (expected unsigned-byte rank-3 images)");
  const std::size_t count = read_be32(bytes.data() + 4);
  const std::size_t height = read_be32(bytes.data() + 8);
  const std::size_t width = read_be32(bytes.data() + 12);
  const std::size_t expect = 16 + count * height * width;
  if (bytes.size() != expect)
    throw FormatError(path + ": size " + std::to_string(bytes.size()) +
                      " does not match header (" + std::to_string(expect) +
                      ")");
  Dataset ds;
  ds.n_classes = 1;
  ds.features = Tensor({count, height, width});
  ds.labels.assign(count, 0);
  for (std::size_t i = 0; i < count * height * width; ++i)
    ds.features[i] = static_cast<double>(bytes[16 + i]) / 255.0;
  return ds;
}

std::vector<int> load_dsv_labels(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw FormatError(path + ": cannot open");
  std::vector<int> labels;
  char line[256];
  while (std::fgets(line, sizeof line, f)) {
    std::string s(line);
    const std::size_t hash = s.find('#');
    if (hash != std::string::npos) s.resize(hash);
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) continue;
    std::size_t b = s.find_last_not_of(" \t\r\n");
    s = s.substr(a, b - a + 1);
    try {
      labels.push_back(std::stoi(s));
    } catch (const std::exception&) {
      std::fclose(f);
      throw FormatError(path + ": bad label line '" + s + "'");
    }
  }
  std::fclose(f);
  return labels;
}

std::vector<Event> load_events(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  constexpr std::size_t kStride = 13;
  if (bytes.size() % kStride != 0)
    throw FormatError(path + ": size is not a multiple of the 13-byte record");
  std::vector<Event> events(bytes.size() / kStride);
  for (std::size_t i = 0; i < events.size(); ++i) {
    ByteReader r(bytes.data() + i * kStride, kStride, path);
    events[i].t_us = r.u64();
    events[i].x = r.u16();
    events[i].y = r.u16();
    events[i].polarity = r.u8();
  }
  return events;
}

Tensor bin_events(const std::vector<Event>& events, std::size_t timesteps,
                  std::size_t height, std::size_t width) {
  if (events.empty()) throw FormatError("bin_events: empty event stream");
  if (timesteps == 0) throw ConfigError("bin_events: timesteps must be >= 1");
  std::uint64_t t_min = events[0].t_us;
  std::uint64_t t_max = events[0].t_us;
  for (const Event& e : events) {
    t_min = std::min(t_min, e.t_us);
    t_max = std::max(t_max, e.t_us);
  }
  // Half-open window [t_min, t_max + 1) split into T equal spans, so the
  // latest event falls in the last frame.
  const std::uint64_t span = t_max - t_min + 1;
  Tensor frames({timesteps, 2, height, width});
  for (const Event& e : events) {
    if (e.polarity > 1)
      throw FormatError("bin_events: polarity " + std::to_string(e.polarity));
    if (e.x >= width || e.y >= height)
      throw FormatError("bin_events: event at (" + std::to_string(e.x) + ", " +
                        std::to_string(e.y) + ") outside " +
                        std::to_string(width) + "x" + std::to_string(height));
    const std::size_t frame = static_cast<std::size_t>(
        static_cast<unsigned __int128>(e.t_us - t_min) * timesteps / span);
    frames[((frame * 2 + e.polarity) * height + e.y) * width + e.x] += 1.0;
  }
  return frames;
}

Tensor encode_direct(const Tensor& features, std::size_t timesteps) {
  if (timesteps == 0) throw ConfigError("encode_direct: timesteps must be >= 1");
  std::vector<std::size_t> shape{timesteps};
  shape.insert(shape.end(), features.shape().begin(), features.shape().end());
  Tensor out(shape);
  for (std::size_t t = 0; t < timesteps; ++t)
    for (std::size_t i = 0; i < features.size(); ++i)
      out[t * features.size() + i] = features[i];
  return out;
}

Tensor batch_input(const Dataset& ds, const std::vector<std::size_t>& indices,
                   std::size_t timesteps) {
  if (indices.empty()) throw ShapeError("batch_input: empty index list");
  const std::size_t batch = indices.size();
  if (ds.temporal) {
    // (B, T, feat) gathered and transposed to (T, B, feat).
    if (ds.features.rank() < 3)
      throw ShapeError("batch_input: temporal features " +
                       ds.features.shape_str());
    const std::size_t stored_t = ds.features.dim(1);
    if (timesteps != stored_t)
      throw ConfigError("batch_input: dataset carries " +
                        std::to_string(stored_t) + " frames but " +
                        std::to_string(timesteps) + " timesteps requested");
    std::vector<std::size_t> feat(ds.features.shape().begin() + 2,
                                  ds.features.shape().end());
    const std::size_t fsize = Tensor::count(feat);
    std::vector<std::size_t> shape{stored_t, batch};
    shape.insert(shape.end(), feat.begin(), feat.end());
    Tensor out(shape);
    for (std::size_t b = 0; b < batch; ++b) {
      if (indices[b] >= ds.size())
        throw ShapeError("batch_input: index out of range");
      for (std::size_t t = 0; t < stored_t; ++t)
        for (std::size_t i = 0; i < fsize; ++i)
          out[(t * batch + b) * fsize + i] =
              ds.features[(indices[b] * stored_t + t) * fsize + i];
    }
    return out;
  }
  std::vector<std::size_t> feat(ds.features.shape().begin() + 1,
                                ds.features.shape().end());
  const std::size_t fsize = Tensor::count(feat);
  std::vector<std::size_t> shape{timesteps, batch};
  shape.insert(shape.end(), feat.begin(), feat.end());
  Tensor out(shape);
  for (std::size_t t = 0; t < timesteps; ++t)
    for (std::size_t b = 0; b < batch; ++b) {
      if (indices[b] >= ds.size())
        throw ShapeError("batch_input: index out of range");
      for (std::size_t i = 0; i < fsize; ++i)
        out[(t * batch + b) * fsize + i] = ds.features[indices[b] * fsize + i];
    }
  return out;
}

std::vector<int> batch_labels(const Dataset& ds,
                              const std::vector<std::size_t>& indices) {
  std::vector<int> labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= ds.labels.size())
      throw ShapeError("batch_labels: index out of range");
    labels[i] = ds.labels[indices[i]];
  }
  return labels;
}

}  // namespace qbsnn
