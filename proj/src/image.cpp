#include "vipatch/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "vipatch/errors.hpp"

namespace vipatch {
namespace {

void check_shape(int width, int height, int channels) {
  if (width <= 0 || height <= 0) {
    throw DimensionError("image dimensions must be positive, got " +
                         std::to_string(width) + "x" + std::to_string(height));
  }
  if (channels != 1 && channels != 3) {
    throw DimensionError("image must have 1 or 3 channels, got " +
                         std::to_string(channels));
  }
}

std::string shape_string(const Image& image) {
  std::ostringstream os;
  os << image.width() << "x" << image.height() << "x" << image.channels();
  return os.str();
}

}  // namespace

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  check_shape(width, height, channels);
  data_.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

Image Image::from_data(int width, int height, int channels,
                       std::vector<double> data) {
  check_shape(width, height, channels);
  Image image;
  image.width_ = width;
  image.height_ = height;
  image.channels_ = channels;
  if (data.size() != image.pixel_count() * static_cast<std::size_t>(channels)) {
    throw DimensionError("image buffer holds " + std::to_string(data.size()) +
                         " values, expected " +
                         std::to_string(image.pixel_count() * channels));
  }
  for (double v : data) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DimensionError("image intensity outside [0,1]: " +
                           std::to_string(v));
    }
  }
  image.data_ = std::move(data);
  return image;
}

Image Image::channel(int c) const {
  Image out(width_, height_, 1);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) out.at(x, y) = at(x, y, c);
  }
  return out;
}

ImagePair::ImagePair(Image visible, Image infrared)
    : visible_(std::move(visible)), infrared_(std::move(infrared)) {
  if (visible_.channels() != 3) {
    throw DimensionError("visible image must have 3 channels");
  }
  if (infrared_.channels() != 1) {
    throw DimensionError("infrared image must have 1 channel");
  }
  if (visible_.width() != infrared_.width() ||
      visible_.height() != infrared_.height()) {
    throw DimensionError("visible " + shape_string(visible_) +
                         " and infrared " + shape_string(infrared_) +
                         " differ in size");
  }
}

Mask::Mask(int width, int height)
    : width_(width),
      height_(height),
      bits_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
            0) {}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

Image embed_patch(const Image& base, const Image& patch_content,
                  const Mask& mask) {
  if (!base.same_shape(patch_content)) {
    throw DimensionError("patch content " + shape_string(patch_content) +
                         " does not match base " + shape_string(base));
  }
  if (mask.width() != base.width() || mask.height() != base.height()) {
    throw DimensionError("mask " + std::to_string(mask.width()) + "x" +
                         std::to_string(mask.height()) +
                         " does not match base " + shape_string(base));
  }
  Image out = base;
  const int channels = base.channels();
  for (int y = 0; y < base.height(); ++y) {
    for (int x = 0; x < base.width(); ++x) {
      if (!mask.test(x, y)) continue;
      for (int c = 0; c < channels; ++c) {
        out.at(x, y, c) = clamp_unit(patch_content.at(x, y, c));
      }
    }
  }
  return out;
}

Mask disk_mask(int x, int y, int r, int width, int height) {
  if (r < 1) {
    throw FeasibilityError("patch radius must be >= 1, got " +
                           std::to_string(r));
  }
  if (width <= 0 || height <= 0) {
    throw DimensionError("mask dimensions must be positive");
  }
  if (x < r) {
    throw FeasibilityError("center x=" + std::to_string(x) +
                           " below lower bound r=" + std::to_string(r));
  }
  if (x > width - r) {
    throw FeasibilityError("center x=" + std::to_string(x) +
                           " above upper bound w-r=" +
                           std::to_string(width - r));
  }
  if (y < r) {
    throw FeasibilityError("center y=" + std::to_string(y) +
                           " below lower bound r=" + std::to_string(r));
  }
  if (y > height - r) {
    throw FeasibilityError("center y=" + std::to_string(y) +
                           " above upper bound h-r=" +
                           std::to_string(height - r));
  }
  Mask mask(width, height);
  const long r2 = static_cast<long>(r) * r;
  const int y_end = std::min(height - 1, y + r);
  const int x_end = std::min(width - 1, x + r);
  for (int i = y - r; i <= y_end; ++i) {
    const long dy = i - y;
    for (int j = x - r; j <= x_end; ++j) {
      const long dx = j - x;
      if (dy * dy + dx * dx <= r2) mask.set(j, i);
    }
  }
  return mask;
}

double luma(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

Image to_grayscale(const Image& image) {
  if (image.channels() == 1) return image;
  Image out(image.width(), image.height(), 1);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      out.at(x, y) = clamp_unit(
          luma(image.at(x, y, 0), image.at(x, y, 1), image.at(x, y, 2)));
    }
  }
  return out;
}

Image gray_to_rgb(const Image& gray) {
  if (gray.channels() == 3) return gray;
  Image out(gray.width(), gray.height(), 3);
  for (int y = 0; y < gray.height(); ++y) {
    for (int x = 0; x < gray.width(); ++x) {
      const double v = gray.at(x, y);
      out.at(x, y, 0) = v;
      out.at(x, y, 1) = v;
      out.at(x, y, 2) = v;
    }
  }
  return out;
}

std::uint8_t to_byte(double intensity) {
  return static_cast<std::uint8_t>(std::lround(clamp_unit(intensity) * 255.0));
}

}  // namespace vipatch
