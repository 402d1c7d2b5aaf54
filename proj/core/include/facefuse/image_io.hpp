#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "facefuse/image.hpp"

namespace facefuse {

using Bytes = std::vector<std::uint8_t>;

// Decodes 8-bit PNG or JPEG (detected by signature) and rescales [0, 255] into
// `range`. Throws FileNotFound, UnsupportedFormat or CorruptData.
Image load_image(const std::filesystem::path& path, ValueRange range);
Image decode_image(std::span<const std::uint8_t> data, ValueRange range);

// Writes an 8-bit PNG; values are clipped and rounded to the nearest byte.
void save_image(const Image& img, const std::filesystem::path& path);

// Byte quantization shared by PNG and JPEG writers.
std::vector<std::uint8_t> quantize_to_bytes(const Image& img);
Image image_from_bytes(int height, int width, int channels, std::span<const std::uint8_t> bytes,
                       ValueRange range);

Bytes encode_png(const Image& img);
Bytes encode_jpeg(const Image& img, int quality);

// DFLD container: "DFLD", u32 version, u32 H, u32 W, then H*W*(dx, dy) as
// little-endian float32.
inline constexpr std::uint32_t kFieldFormatVersion = 1;
Bytes encode_field(const DeformationField& field);
DeformationField decode_field(std::span<const std::uint8_t> data);
void save_field(const DeformationField& field, const std::filesystem::path& path);
DeformationField load_field(const std::filesystem::path& path);

// Single-channel PNG where 0 -> 0 and 255 -> 1 (threshold at 128).
SemanticMask load_mask(const std::filesystem::path& path);
void save_mask(const SemanticMask& mask, const std::filesystem::path& path);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data);

}  // namespace facefuse
