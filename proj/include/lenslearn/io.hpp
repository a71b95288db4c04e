#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lenslearn {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Reads a file, transparently inflating it when it starts with the gzip magic.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

// Writes through a temporary file and renames, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::uint64_t content_hash(std::span<const std::uint8_t> bytes);
std::string hex64(std::uint64_t v);
std::string file_hash(const std::filesystem::path& path);

}  // namespace lenslearn
