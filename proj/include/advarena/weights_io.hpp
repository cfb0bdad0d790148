#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advarena/tensor.hpp"

namespace advarena {

/// Raised for malformed weight files. The message names the section and byte offset.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary weights container:
///   "ADVW" | u16 version | u32 spec length | spec text | u32 tensor count |
///   per tensor: u32 rank | rank x u64 extents | prod(extents) x f64
/// All integers and floats little-endian.
struct WeightsFile {
  static constexpr std::uint16_t kVersion = 1;

  std::string spec_text;
  std::vector<Tensor> tensors;
};

std::vector<std::uint8_t> encode_weights(const WeightsFile& file);
WeightsFile decode_weights(const std::vector<std::uint8_t>& bytes);

void write_weights_file(const std::filesystem::path& path, const WeightsFile& file);
WeightsFile read_weights_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// FNV-1a over the encoded tensors; used to check that frozen models stay frozen.
std::uint64_t hash_tensors(const std::vector<Tensor>& tensors);

}  // namespace advarena
