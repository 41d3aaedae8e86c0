#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "vipatch/errors.hpp"
#include "vipatch/image.hpp"
#include "vipatch/log.hpp"

namespace vipatch {
namespace {

// RAII wrapper around libpng's simplified-API control block.
class PngImage {
 public:
  PngImage() {
    std::memset(&image_, 0, sizeof(image_));
    image_.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image_); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;

  png_image* get() { return &image_; }
  png_image* operator->() { return &image_; }
  std::string message() const { return image_.message; }

 private:
  png_image image_;
};

std::vector<std::uint8_t> to_bytes(const Image& image) {
  std::vector<std::uint8_t> bytes(image.data().size());
  auto src = image.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(src[i]);
  return bytes;
}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
  PngImage png;
  if (!png_image_begin_read_from_memory(png.get(), bytes.data(),
                                        bytes.size())) {
    throw FormatError("cannot decode PNG: " + png.message());
  }
  const auto format = png->format;
  if (format & PNG_FORMAT_FLAG_LINEAR) {
    throw FormatError("unsupported PNG bit depth (only 8-bit is accepted)");
  }
  if (format & PNG_FORMAT_FLAG_ALPHA) {
    throw FormatError("unsupported PNG channel count (alpha channel present)");
  }
  const bool color = (format & PNG_FORMAT_FLAG_COLOR) != 0;
  const int channels = color ? 3 : 1;
  png->format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int width = static_cast<int>(png->width);
  const int height = static_cast<int>(png->height);
  std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(*png.get()));
  if (!png_image_finish_read(png.get(), nullptr, raw.data(), 0, nullptr)) {
    throw FormatError("cannot decode PNG: " + png.message());
  }
  std::vector<double> data(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) data[i] = raw[i] / 255.0;
  return Image::from_data(width, height, channels, std::move(data));
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.empty()) throw FormatError("cannot encode an empty image");
  PngImage png;
  png->width = static_cast<png_uint_32>(image.width());
  png->height = static_cast<png_uint_32>(image.height());
  png->format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto bytes = to_bytes(image);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(png.get(), nullptr, &size, 0, bytes.data(), 0,
                                 nullptr)) {
    throw FormatError("cannot encode PNG: " + png.message());
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(png.get(), out.data(), &size, 0, bytes.data(),
                                 0, nullptr)) {
    throw FormatError("cannot encode PNG: " + png.message());
  }
  out.resize(size);
  return out;
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_image(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Image load_visible(const std::filesystem::path& path) {
  Image image = load_image(path);
  if (image.channels() == 1) {
    log_warning(path.string() +
                ": grayscale visible image replicated to 3 channels");
    return gray_to_rgb(image);
  }
  return image;
}

Image load_infrared(const std::filesystem::path& path) {
  Image image = load_image(path);
  if (image.channels() == 1) return image;
  log_warning(path.string() +
              ": 3-channel infrared image collapsed to one channel");
  bool gray = true;
  for (int y = 0; y < image.height() && gray; ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (image.at(x, y, 0) != image.at(x, y, 1) ||
          image.at(x, y, 0) != image.at(x, y, 2)) {
        gray = false;
        break;
      }
    }
  }
  return gray ? image.channel(0) : to_grayscale(image);
}

}  // namespace vipatch
