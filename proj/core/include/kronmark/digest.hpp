#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace kronmark {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::span<const std::uint8_t> bytes);
Sha256 sha256(std::string_view text);
std::string to_hex(std::span<const std::uint8_t> bytes);
// Hex SHA-256 of a file's bytes; throws MissingFileError if unreadable.
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace kronmark
