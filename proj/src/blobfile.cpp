#include "snet/blobfile.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "snet/errors.hpp"

namespace snet::io {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointCorruptError("truncated file (needed " + std::to_string(n) + " more bytes at offset " +
                                   std::to_string(pos_) + "): " + path_.string());
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_blob_file(const std::filesystem::path& path, std::string_view magic, std::uint32_t version,
                     std::string_view header, std::span<const BlobView> blobs) {
  std::string out;
  out.append(magic);
  put_u32(out, version);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.append(header);
  put_u32(out, static_cast<std::uint32_t>(blobs.size()));
  for (const BlobView& blob : blobs) {
    put_u32(out, static_cast<std::uint32_t>(blob.name.size()));
    out.append(blob.name);
    put_u64(out, blob.values.size());
    for (float f : blob.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open for writing: " + tmp.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    file.flush();
    if (!file) throw IoError("failed writing (disk full?): " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

BlobFile read_blob_file(const std::filesystem::path& path, std::string_view magic,
                        std::uint32_t expected_version) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open file: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  if (file.bad()) throw IoError("failed reading: " + path.string());

  Reader r(bytes, path);
  if (bytes.size() < magic.size() || std::string_view(bytes).substr(0, magic.size()) != magic) {
    throw CheckpointCorruptError("bad magic, not a " + std::string(magic) + " file: " + path.string());
  }
  r.text(magic.size());
  BlobFile result;
  result.version = r.u32();
  if (result.version != expected_version) {
    throw CheckpointVersionError("unsupported format version " + std::to_string(result.version) +
                                 " (expected " + std::to_string(expected_version) + "): " + path.string());
  }
  result.header = r.text(r.u32());
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    Blob blob;
    blob.name = r.text(r.u32());
    const std::uint64_t n = r.u64();
    if (n > r.remaining() / 4) {
      throw CheckpointCorruptError("blob '" + blob.name + "' length exceeds file size: " + path.string());
    }
    blob.values.resize(n);
    for (std::uint64_t j = 0; j < n; ++j) blob.values[j] = std::bit_cast<float>(r.u32());
    result.blobs.push_back(std::move(blob));
  }
  if (!r.at_end()) throw CheckpointCorruptError("trailing bytes after last blob: " + path.string());
  return result;
}

}  // namespace snet::io
