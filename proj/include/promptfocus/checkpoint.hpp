#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "promptfocus/nn.hpp"

namespace pf {

/// PFFC container: "PFFC", u32 version, then records until end of file, each
/// u32 name length, UTF-8 name, u32 rank, u32 extents, float64 payload.
/// All integers and floats little-endian.
std::vector<unsigned char> encode_checkpoint(std::span<const nn::NamedTensor> tensors);
std::vector<nn::NamedTensor> decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const std::filesystem::path& path, std::span<const nn::NamedTensor> tensors);
std::vector<nn::NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into same-named, same-shaped tensors of `into`.
/// Every tensor of `into` must be present.
void restore_checkpoint(std::span<const nn::NamedTensor> saved, std::span<nn::NamedTensor> into);

}  // namespace pf
