#pragma once

// Checkpoint file: a flat list of named parameter arrays.
//
//   "ICFCKPT1"                          8-byte magic
//   u32 count
//   count x { u32 name_len, name, u32 group, u32 policy,
//             u32 rank, rank x u64 extent, product(extents) x f64 }
//
// Integers and doubles are little-endian; values are stored bit-exactly.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "icf/model.hpp"

namespace icf::checkpoint {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string serialize(const model::ParameterSet& params);
model::ParameterSet deserialize(std::string_view bytes);

void save(const model::ParameterSet& params, const std::filesystem::path& path);
model::ParameterSet load(const std::filesystem::path& path);

/// Replaces the model's parameter values with the checkpoint's. Names, groups
/// and shapes must match exactly.
void restore(model::Model& m, const model::ParameterSet& saved);

}  // namespace icf::checkpoint
