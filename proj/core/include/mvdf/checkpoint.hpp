#pragma once

#include <string>

#include "mvdf/config.hpp"

namespace mvdf {

// On-disk model snapshot. Binary layout, all integers little-endian:
//   "MVDF" | u32 version | u64 json_len | metadata json | u64 tensor_count |
//   tensors, each: u64 name_len | name | u64 rows | u64 cols | f32 data.
// Tensors follow the canonical parameter traversal, then (when present)
// optimizer first and second moments as opt.m.<name> / opt.v.<name>.
// Serialization is canonical, so save -> load -> save is byte-identical.
struct Checkpoint {
  RunConfig config;
  int64_t step = 0;
  Weights<float> weights;
  AdamState opt;
  bool has_opt = false;
};

void save_checkpoint(const std::string& path, Checkpoint& ck);

// Rejects bad magic, unknown versions, tensor name/shape mismatches against
// the embedded config, digest mismatches, and truncated files.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mvdf
