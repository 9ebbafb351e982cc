#pragma once

// Binary tensor checkpoints.
//
// Layout (all integers little-endian):
//   "SDPM"                       4 magic bytes
//   u32 format version           currently 1
//   repeated until end of stream:
//     u32 name length, name bytes
//     u32 rank, u64 dims[rank]
//     f64 values[product(dims)]  raw IEEE-754 bit patterns

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdp/autodiff.hpp"

namespace sdp::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

// Copies values from `source` into the same-named tensors of `target`.
// Every target name must be present with an identical shape.
void assign_values(std::vector<NamedTensor>& target, const std::vector<NamedTensor>& source);

}  // namespace sdp::ad
