#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "exnorm/model.hpp"

namespace exnorm {

/// Everything needed to rebuild a micro-CNN from a checkpoint.
struct ModelDescriptor {
  MicroConfig micro;
  NormSpec norm;
  std::string precision = "f64";  // "f32" or "f64"
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

std::string descriptor_json(const ModelDescriptor& d);
ModelDescriptor descriptor_from_json(const std::string& text);

/// Layout: 8 magic bytes "EXNORMCK", u64 version, u64 descriptor length +
/// JSON descriptor, u64 entry count, then per entry: u64 name length + name,
/// u64 kind (0 parameter, 1 buffer), u64 rank, rank x u64 dims, u64 count,
/// count x f64 values. Integers and doubles little-endian. Entries follow
/// declaration order: parameters, then buffers.
template <typename T>
void save_checkpoint(const std::string& path, Network<T>& model, const ModelDescriptor& descriptor);

/// Reads only the descriptor.
ModelDescriptor read_checkpoint_descriptor(const std::string& path);

/// Rebuilds the model described in the file and restores every entry.
/// Throws std::runtime_error naming the path on malformed or mismatched data.
template <typename T>
Network<T> load_checkpoint(const std::string& path, ModelDescriptor* descriptor = nullptr);

}  // namespace exnorm
