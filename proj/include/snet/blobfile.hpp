#pragma once

// Container shared by model checkpoints and optimizer state files:
// 8-byte magic, u32 version, u32 length + header text, u32 blob count, then
// per blob u32 name length, name, u64 float count, float32 values. All
// integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace snet::io {

struct BlobView {
  std::string name;
  std::span<const float> values;
};

struct Blob {
  std::string name;
  std::vector<float> values;
};

struct BlobFile {
  std::uint32_t version = 0;
  std::string header;
  std::vector<Blob> blobs;
};

// Writes to a temporary sibling and renames, so readers never observe a
// partially written file. Throws IoError.
void write_blob_file(const std::filesystem::path& path, std::string_view magic, std::uint32_t version,
                     std::string_view header, std::span<const BlobView> blobs);

// Throws IoError if unreadable, CheckpointVersionError when the stored
// version differs from `expected_version`, and CheckpointCorruptError on a bad
// magic, truncation, or trailing bytes.
BlobFile read_blob_file(const std::filesystem::path& path, std::string_view magic,
                        std::uint32_t expected_version);

}  // namespace snet::io
