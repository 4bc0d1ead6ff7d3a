#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "kronmark/digest.hpp"
#include "kronmark/tensor.hpp"

// Binary checkpoint, all integers little-endian:
//
//   magic      4 bytes  "KMCK"
//   version    u32      1
//   digest     32 bytes SHA-256 of the model's canonical configuration text
//   count      u32      number of tensors
//   per tensor:
//     name_len u32, name bytes (UTF-8, no terminator)
//     rank     u32, extents u64 x rank
//     values   IEEE-754 binary32 x product(extents)
namespace kronmark {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor<float> value;
};

struct Checkpoint {
    Sha256 config_digest{};
    std::vector<NamedTensor> tensors;

    const Tensor<float>& at(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
// Throws MissingFileError when absent and ParseError (line 0) when malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace kronmark
