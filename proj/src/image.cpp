#include "snet/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>

namespace snet {
namespace {

struct PpmHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t maxval = 0;
  std::size_t data_offset = 0;
};

// Netpbm header token reader that skips whitespace and '#' comments.
class HeaderCursor {
 public:
  explicit HeaderCursor(const std::string& bytes) : bytes_(bytes) {}

  std::optional<std::size_t> number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (++digits > 9) return std::nullopt;
      ++pos_;
    }
    if (digits == 0) return std::nullopt;
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  bool single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) return false;
    ++pos_;
    return true;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading image file: " + path.string());
  return bytes;
}

PpmHeader parse_header(const std::string& bytes, const std::filesystem::path& path) {
  if (bytes.size() < 2 || bytes[0] != 'P') {
    throw UnsupportedFormatError("not a netpbm file: " + path.string());
  }
  if (bytes[1] != '6') {
    throw UnsupportedFormatError("only binary P6 images are supported: " + path.string());
  }
  HeaderCursor cur(bytes);
  cur.advance(2);
  PpmHeader h;
  const auto w = cur.number();
  const auto ht = cur.number();
  const auto maxval = cur.number();
  if (!w || !ht || !maxval || !cur.single_whitespace()) {
    throw MalformedFileError("malformed PPM header: " + path.string());
  }
  if (*w == 0 || *ht == 0) throw MalformedFileError("PPM image has zero area: " + path.string());
  if (*maxval != 255) {
    throw UnsupportedFormatError("only 8-bit PPM (maxval 255) is supported: " + path.string());
  }
  h.width = *w;
  h.height = *ht;
  h.maxval = *maxval;
  h.data_offset = cur.pos();
  return h;
}

}  // namespace

ImageRGB read_image(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  const PpmHeader h = parse_header(bytes, path);
  const std::size_t payload = h.width * h.height * 3;
  if (bytes.size() - h.data_offset < payload) {
    throw MalformedFileError("truncated PPM payload: " + path.string());
  }
  ImageRGB img(h.height, h.width);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
            bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset + payload), img.pixels.begin());
  return img;
}

void write_image(const std::filesystem::path& path, const ImageRGB& image, ImageFormat format) {
  if (format != ImageFormat::kPpm) throw UnsupportedFormatError("unsupported output format");
  if (image.empty() || image.pixels.size() != image.height * image.width * 3) {
    throw MalformedFileError("refusing to write an empty or inconsistent image");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  out.flush();
  if (!out) throw IoError("failed writing image: " + path.string());
}

bool looks_like_ppm(const std::filesystem::path& path) {
  try {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    std::string head(512, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<std::size_t>(in.gcount()));
    parse_header(head, path);
    return true;
  } catch (const Error&) {
    return false;
  }
}

Tensor to_tensor(const ImageRGB& image) {
  Tensor t(Shape{1, 3, image.height, image.width});
  store_tensor(image, t, 0);
  return t;
}

void store_tensor(const ImageRGB& image, Tensor& batch, std::size_t slot) {
  const Shape& s = batch.shape();
  if (s.c != 3 || s.h != image.height || s.w != image.width || slot >= s.n) {
    throw ShapeError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " does not fit batch " + s.to_string());
  }
  const std::size_t hw = image.height * image.width;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    float* dst = batch.plane(slot, ch);
    for (std::size_t i = 0; i < hw; ++i) dst[i] = static_cast<float>(image.pixels[i * 3 + ch]) / 255.0f;
  }
}

ImageRGB from_tensor(const Tensor& t, std::size_t slot) {
  const Shape& s = t.shape();
  if (s.c != 3 || slot >= s.n) throw ShapeError("tensor " + s.to_string() + " is not an RGB batch");
  ImageRGB img(s.h, s.w);
  const std::size_t hw = s.h * s.w;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const float* src = t.plane(slot, ch);
    for (std::size_t i = 0; i < hw; ++i) {
      const float v = std::clamp(src[i], 0.0f, 1.0f) * 255.0f;
      img.pixels[i * 3 + ch] = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  return img;
}

}  // namespace snet
