#include "sdp/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace sdp::ad {

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'D', 'P', 'M'};

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
bool get_le(std::istream& in, T& value) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) return false;
  value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return true;
}

template <typename T>
T require_le(std::istream& in, const char* what) {
  T value;
  if (!get_le(in, value)) throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, tensor] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto d : tensor.shape()) put_le<std::uint64_t>(out, d);
    for (double v : tensor.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw CheckpointError("checkpoint write failed");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw CheckpointError("not an SDPM checkpoint");
  const auto version = require_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<NamedTensor> tensors;
  std::uint32_t name_len;
  while (get_le(in, name_len)) {
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw CheckpointError("checkpoint truncated in tensor name");
    const auto rank = require_le<std::uint32_t>(in, "rank");
    if (rank == 0) throw CheckpointError("tensor '" + name + "' has rank 0");
    Shape shape(rank);
    for (auto& d : shape) d = require_le<std::uint64_t>(in, "dims");
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = std::bit_cast<double>(require_le<std::uint64_t>(in, "values"));
    tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, tensors);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

void assign_values(std::vector<NamedTensor>& target, const std::vector<NamedTensor>& source) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& nt : source) by_name[nt.name] = &nt.tensor;
  for (auto& [name, tensor] : target) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
    if (it->second->shape() != tensor.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + shape_string(it->second->shape()) +
                            ", expected " + shape_string(tensor.shape()));
    }
    auto src = it->second->values();
    std::copy(src.begin(), src.end(), tensor.mutable_values().begin());
  }
}

}  // namespace sdp::ad
