#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "salsum/tensor.hpp"

namespace salsum {

// Container layout (all integers little-endian):
//   magic "SSEQ1", u32 version,
//   u64 config length + config text (key=value lines, stored verbatim),
//   u32 vocab count, then per token: u32 length + bytes,
//   u32 record count, then per record:
//     u32 name length + name, u32 rank, u64 dims..., f32 data.
struct TensorBlob {
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::string config_text;
  std::vector<std::string> vocab_tokens;
  std::vector<std::pair<std::string, TensorBlob>> records;

  const TensorBlob* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace salsum
