#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcnet/optim.hpp"

// Checkpoint layout, all integers u64 little-endian, all reals f64 little-endian:
//
//   "DCN1" count
//   count x { name_len name rank dims[rank] data[n] adam_m[n] adam_v[n] step }
namespace dcnet {

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<double> data;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::uint64_t step = 0;
};

std::vector<std::uint8_t> encode_checkpoint(std::span<const Parameter> params);
std::vector<CheckpointRecord> decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                                                const std::string& context = "checkpoint");

void save_checkpoint(const std::string& path, std::span<const Parameter> params);
std::vector<CheckpointRecord> read_checkpoint(const std::string& path);

/// Restores values and optimizer state into `params`. Every parameter must be
/// present with the same shape, and the file may not carry extra names.
void load_checkpoint(const std::string& path, std::span<Parameter> params);

}  // namespace dcnet
