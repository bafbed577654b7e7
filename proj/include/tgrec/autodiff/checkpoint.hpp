#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "tgrec/autodiff/params.hpp"
#include "tgrec/autodiff/tensor.hpp"

namespace tgrec::ad {

// On-disk layout (all integers little-endian):
//
//   magic      8 bytes  "TGRCKPT1"
//   u32        number of metadata entries
//     u32 len, bytes   key
//     u32 len, bytes   value
//   u32        number of tensors
//     u32 len, bytes   name
//     u32              rank (0..2)
//     u64 x rank       dimensions
//     f64 x size       values, row-major, raw IEEE-754 bits
//
// Values are written bit-for-bit, so a save/load round trip is lossless.
struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::map<std::string, Tensor> tensors;

  friend auto operator==(const Checkpoint&, const Checkpoint&) -> bool = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
auto read_checkpoint(std::istream& in) -> Checkpoint;
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
auto load_checkpoint(const std::filesystem::path& path) -> Checkpoint;

// Parameters are stored under "param.<name>".
void put_params(Checkpoint& ckpt, const ModelParams& params);
auto take_params(const Checkpoint& ckpt) -> ModelParams;

}  // namespace tgrec::ad
