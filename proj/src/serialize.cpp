#include "qbsnn/serialize.hpp"

#include <cstdio>

namespace qbsnn {

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw FormatError(path + ": cannot open for writing");
  const std::size_t written = bytes.empty() ? 0 : std::fwrite(bytes.data(), 1, bytes.size(), f);
  const bool ok = written == bytes.size() && std::fclose(f) == 0;
  if (!ok) throw FormatError(path + ": short write");
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw FormatError(path + ": cannot open");
  std::fseek(f, 0, SEEK_END);
  const long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  if (size < 0) {
    std::fclose(f);
    throw FormatError(path + ": cannot determine size");
  }
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  const std::size_t got = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (got != bytes.size()) throw FormatError(path + ": short read");
  return bytes;
}

void put_shape(ByteWriter& w, const std::vector<std::size_t>& shape) {
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) w.u64(d);
}

std::vector<std::size_t> get_shape(ByteReader& r) {
  const std::uint32_t rank = r.u32();
  std::vector<std::size_t> shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) shape[i] = r.u64();
  return shape;
}

void put_tensor(ByteWriter& w, const Tensor& t) {
  put_shape(w, t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) w.f64(t[i]);
}

Tensor get_tensor(ByteReader& r) {
  const std::vector<std::size_t> shape = get_shape(r);
  if (shape.empty()) return Tensor();  // disabled bias etc., zero elements
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f64();
  return t;
}

void put_neuron(ByteWriter& w, const NeuronConfig& cfg) {
  w.u8(static_cast<std::uint8_t>(cfg.kind));
  w.f64(cfg.beta);
  w.f64(cfg.alpha);
  w.f64(cfg.v_theta);
  w.f64(cfg.gamma);
  w.u32(static_cast<std::uint32_t>(cfg.n_max));
}

NeuronConfig get_neuron(ByteReader& r) {
  NeuronConfig cfg;
  cfg.kind = static_cast<NeuronKind>(r.u8());
  cfg.beta = r.f64();
  cfg.alpha = r.f64();
  cfg.v_theta = r.f64();
  cfg.gamma = r.f64();
  cfg.n_max = static_cast<int>(r.u32());
  return cfg;
}

}  // namespace qbsnn
