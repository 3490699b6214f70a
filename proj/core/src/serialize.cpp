#include "abip/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "abip/error.hpp"
#include "abip/version.hpp"

namespace abip {
namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(std::string("truncated ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& in, const char* what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError(std::string("truncated ") + what);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

void expect_magic(std::istream& in, const char* magic, const std::filesystem::path& path) {
  char got[4];
  if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0)
    throw DataError("bad magic in " + path.string() + " (expected " + magic + ")");
}

}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write("ABIP", 4);
  put_u32(out, kCheckpointFormatVersion);
  const std::string& name = net.product.name();
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<std::uint32_t>(net.dim()));
  put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
  for (int w : net.topology) put_u32(out, static_cast<std::uint32_t>(w));
  for (const Layer& layer : net.layers) {
    for (double v : layer.weights.flat()) put_f64(out, v);
    for (double v : layer.biases.flat()) put_f64(out, v);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path, Activation hidden, Activation output) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  expect_magic(in, "ABIP", path);
  std::uint32_t version = get_u32(in, "checkpoint version");
  if (version != kCheckpointFormatVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::uint32_t name_len = get_u32(in, "product name length");
  std::string name(name_len, '\0');
  if (!in.read(name.data(), name_len)) throw DataError("truncated product name");
  std::uint32_t n = get_u32(in, "dimension");
  std::uint32_t layer_count = get_u32(in, "layer count");
  std::vector<int> topology(layer_count + 1);
  for (auto& w : topology) w = static_cast<int>(get_u32(in, "topology width"));

  Network net{resolve_product(name, static_cast<int>(n)), std::move(topology), {}, hidden, output};
  net.layers.reserve(layer_count);
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    std::size_t out_w = static_cast<std::size_t>(net.topology[l + 1]);
    std::size_t in_w = static_cast<std::size_t>(net.topology[l]);
    Layer layer{Tensor3(out_w, in_w, n), Matrix(out_w, n)};
    for (double& v : layer.weights.flat()) v = get_f64(in, "weights");
    for (double& v : layer.biases.flat()) v = get_f64(in, "biases");
    net.layers.push_back(std::move(layer));
  }
  return net;
}

void save_abtn(const std::filesystem::path& path, const std::vector<std::uint32_t>& dims,
               std::span<const double> data) {
  std::size_t expected = 1;
  for (std::uint32_t d : dims) expected *= d;
  if (expected != data.size())
    throw DimensionError("abtn: dims do not match payload size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write tensor: " + path.string());
  out.write("ABTN", 4);
  put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (std::uint32_t d : dims) put_u32(out, d);
  for (double v : data) put_f64(out, v);
  if (!out) throw DataError("write failed: " + path.string());
}

AbtnTensor load_abtn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor: " + path.string());
  expect_magic(in, "ABTN", path);
  std::uint32_t rank = get_u32(in, "rank");
  AbtnTensor t;
  t.dims.resize(rank);
  std::size_t total = 1;
  for (auto& d : t.dims) {
    d = get_u32(in, "dim");
    total *= d;
  }
  t.data.resize(total);
  for (double& v : t.data) v = get_f64(in, "payload");
  return t;
}

}  // namespace abip
