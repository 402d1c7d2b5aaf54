#pragma once

#include <span>
#include <vector>

#include "facefuse/image.hpp"
#include "facefuse/nn/tensor.hpp"

// Bridges between the HWC value types and NCHW network tensors.
namespace facefuse {

// Stacks images (same shape) into an (N, C, H, W) tensor, values converted to `range`.
template <typename T>
nn::Tensor<T> images_to_tensor(std::span<const Image> images, ValueRange range);
template <typename T>
nn::Tensor<T> image_to_tensor(const Image& image, ValueRange range);

// Extracts batch item `index`, clipping into `range`.
template <typename T>
Image tensor_to_image(const nn::Tensor<T>& tensor, int index, ValueRange range);

template <typename T>
nn::Tensor<T> fields_to_tensor(std::span<const DeformationField> fields);
template <typename T>
DeformationField tensor_to_field(const nn::Tensor<T>& tensor, int index);

template <typename T>
nn::Tensor<T> masks_to_tensor(std::span<const SemanticMask> masks);

template <typename T>
nn::Tensor<T> feature_to_tensor(const FeatureMap& map);
template <typename T>
FeatureMap tensor_to_feature(const nn::Tensor<T>& tensor, int index);

}  // namespace facefuse
