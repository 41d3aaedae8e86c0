#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace vipatch {

// Row-major interleaved image with real-valued intensities in [0, 1].
// Pixel (x, y) channel c lives at (y * width + x) * channels + c.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0);

  // Validates the buffer length and that every value lies in [0, 1].
  static Image from_data(int width, int height, int channels,
                         std::vector<double> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const { return data_.empty(); }

  double& at(int x, int y, int c = 0) {
    return data_[index(x, y, c)];
  }
  double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }
  bool same_size(int width, int height) const {
    return width_ == width && height_ == height;
  }

  // Single channel view copied out as a 1-channel image.
  Image channel(int c) const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Registered visible (3-channel) and infrared (1-channel) images.
class ImagePair {
 public:
  ImagePair() = default;
  ImagePair(Image visible, Image infrared);

  const Image& visible() const { return visible_; }
  const Image& infrared() const { return infrared_; }
  int width() const { return visible_.width(); }
  int height() const { return visible_.height(); }

  friend bool operator==(const ImagePair&, const ImagePair&) = default;

 private:
  Image visible_;
  Image infrared_;
};

class Mask {
 public:
  Mask() = default;
  Mask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  bool test(int x, int y) const {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool value = true) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0;
  }
  std::size_t count() const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Composition: base where the mask is unset, patch where it is set.
Image embed_patch(const Image& base, const Image& patch_content,
                  const Mask& mask);

// Closed discrete disk (dx^2 + dy^2 <= r^2) centered at pixel (x, y). The
// center must satisfy x in [r, w - r] and y in [r, h - r]; pixels falling
// past the far image edge are clipped.
Mask disk_mask(int x, int y, int r, int width, int height);

// BT.601 luma. 1-channel inputs are returned unchanged.
Image to_grayscale(const Image& image);
double luma(double r, double g, double b);

// Replicates a 1-channel image into three identical channels.
Image gray_to_rgb(const Image& gray);

double clamp_unit(double v);

// 8-bit PNG (grayscale or RGB) I/O. Value v maps to v / 255 and back via
// round(intensity * 255).
Image load_image(const std::filesystem::path& path);
void save_image(const Image& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes);

// Loaders enforcing modality channel counts. A 3-channel infrared file is
// collapsed to one channel with a warning.
Image load_visible(const std::filesystem::path& path);
Image load_infrared(const std::filesystem::path& path);

std::uint8_t to_byte(double intensity);

}  // namespace vipatch
