#include "facefuse/tensor_convert.hpp"

#include "facefuse/error.hpp"

namespace facefuse {

using nn::Shape;
using nn::Tensor;

template <typename T>
Tensor<T> images_to_tensor(std::span<const Image> images, ValueRange range) {
  if (images.empty()) throw InvalidArgument("images_to_tensor: empty batch");
  const Image& first = images.front();
  Tensor<T> out(Shape{static_cast<int>(images.size()), first.channels(), first.height(), first.width()});
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (!images[n].same_shape(first)) throw ShapeMismatch("images_to_tensor: mixed shapes in batch");
    const Image img = convert_range(images[n], range);
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        for (int c = 0; c < img.channels(); ++c) {
          out.at(static_cast<int>(n), c, y, x) = static_cast<T>(img.at(y, x, c));
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image, ValueRange range) {
  return images_to_tensor<T>(std::span<const Image>(&image, 1), range);
}

template <typename T>
Image tensor_to_image(const Tensor<T>& tensor, int index, ValueRange range) {
  const Shape s = tensor.shape();
  if (index < 0 || index >= s.n) throw InvalidArgument("tensor_to_image: batch index out of range");
  std::vector<double> px(static_cast<std::size_t>(s.h) * s.w * s.c);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < s.c; ++c) {
        px[(static_cast<std::size_t>(y) * s.w + x) * s.c + c] = tensor.at(index, c, y, x);
      }
    }
  }
  return Image::clipped(s.h, s.w, s.c, range, std::move(px));
}

template <typename T>
Tensor<T> fields_to_tensor(std::span<const DeformationField> fields) {
  if (fields.empty()) throw InvalidArgument("fields_to_tensor: empty batch");
  const int h = fields.front().height(), w = fields.front().width();
  Tensor<T> out(Shape{static_cast<int>(fields.size()), 2, h, w});
  for (std::size_t n = 0; n < fields.size(); ++n) {
    const auto& f = fields[n];
    if (f.height() != h || f.width() != w) throw ShapeMismatch("fields_to_tensor: mixed shapes");
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out.at(static_cast<int>(n), 0, y, x) = static_cast<T>(f.dx(y, x));
        out.at(static_cast<int>(n), 1, y, x) = static_cast<T>(f.dy(y, x));
      }
    }
  }
  return out;
}

template <typename T>
DeformationField tensor_to_field(const Tensor<T>& tensor, int index) {
  const Shape s = tensor.shape();
  if (s.c != 2) throw ShapeMismatch("tensor_to_field: expected 2 channels, got " + s.str());
  std::vector<double> v(static_cast<std::size_t>(s.h) * s.w * 2);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      v[(static_cast<std::size_t>(y) * s.w + x) * 2] = tensor.at(index, 0, y, x);
      v[(static_cast<std::size_t>(y) * s.w + x) * 2 + 1] = tensor.at(index, 1, y, x);
    }
  }
  return DeformationField(s.h, s.w, std::move(v));
}

template <typename T>
Tensor<T> masks_to_tensor(std::span<const SemanticMask> masks) {
  if (masks.empty()) throw InvalidArgument("masks_to_tensor: empty batch");
  const int h = masks.front().height(), w = masks.front().width();
  Tensor<T> out(Shape{static_cast<int>(masks.size()), 1, h, w});
  for (std::size_t n = 0; n < masks.size(); ++n) {
    if (masks[n].height() != h || masks[n].width() != w) throw ShapeMismatch("masks_to_tensor: mixed shapes");
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(static_cast<int>(n), 0, y, x) = masks[n].at(y, x);
    }
  }
  return out;
}

template <typename T>
Tensor<T> feature_to_tensor(const FeatureMap& map) {
  Tensor<T> out(Shape{1, map.depth(), map.height(), map.width()});
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      for (int c = 0; c < map.depth(); ++c) out.at(0, c, y, x) = static_cast<T>(map.at(y, x, c));
    }
  }
  return out;
}

template <typename T>
FeatureMap tensor_to_feature(const Tensor<T>& tensor, int index) {
  const Shape s = tensor.shape();
  std::vector<double> v(static_cast<std::size_t>(s.h) * s.w * s.c);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < s.c; ++c) {
        v[(static_cast<std::size_t>(y) * s.w + x) * s.c + c] = tensor.at(index, c, y, x);
      }
    }
  }
  return FeatureMap(s.h, s.w, s.c, std::move(v));
}

#define FACEFUSE_INSTANTIATE(T)                                                      \
  template Tensor<T> images_to_tensor<T>(std::span<const Image>, ValueRange);        \
  template Tensor<T> image_to_tensor<T>(const Image&, ValueRange);                   \
  template Image tensor_to_image<T>(const Tensor<T>&, int, ValueRange);              \
  template Tensor<T> fields_to_tensor<T>(std::span<const DeformationField>);         \
  template DeformationField tensor_to_field<T>(const Tensor<T>&, int);               \
  template Tensor<T> masks_to_tensor<T>(std::span<const SemanticMask>);              \
  template Tensor<T> feature_to_tensor<T>(const FeatureMap&);                        \
  template FeatureMap tensor_to_feature<T>(const Tensor<T>&, int);

FACEFUSE_INSTANTIATE(float)
FACEFUSE_INSTANTIATE(double)

#undef FACEFUSE_INSTANTIATE

}  // namespace facefuse
