#pragma once

#include <string>
#include <utility>
#include <vector>

#include "amoe/model.hpp"
#include "amoe/tensor.hpp"

namespace amoe {

// Binary checkpoint, little-endian:
//   magic "AMOE" | u32 version=1 | u32 config length | config UTF-8 |
//   u32 tensor count | per tensor: u16 name length | name | u8 ndim=2 |
//   u64 rows | u64 cols | rows*cols f64 row-major
struct LoadedCheckpoint {
    std::string config_echo;
    std::vector<std::pair<std::string, Tensor2>> tensors;
};

void save_checkpoint(const std::string& path, const TinyTransformer& model,
                     const std::string& config_echo);
LoadedCheckpoint read_checkpoint(const std::string& path);

// Copy checkpoint tensors into an existing model. base_only restores just
// the "base." tensors (stage-2 init from a stage-1 checkpoint); otherwise
// every model parameter must be present. Shape mismatches are errors.
void restore_into(TinyTransformer& model, const LoadedCheckpoint& ck, bool base_only);

}  // namespace amoe
