#include "facefuse/image_io.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <cmath>
#include <algorithm>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "facefuse/error.hpp"

namespace facefuse {

namespace fs = std::filesystem;

Bytes read_file(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw FileNotFound("no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::uint8_t> quantize_to_bytes(const Image& img) {
  const Image unit = convert_range(img, ValueRange::unit);
  std::vector<std::uint8_t> out(unit.size());
  const auto px = unit.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(px[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

Image image_from_bytes(int height, int width, int channels, std::span<const std::uint8_t> bytes,
                       ValueRange range) {
  std::vector<double> px(bytes.size());
  if (range == ValueRange::unit) {
    for (std::size_t i = 0; i < bytes.size(); ++i) px[i] = bytes[i] / 255.0;
  } else {
    for (std::size_t i = 0; i < bytes.size(); ++i) px[i] = bytes[i] / 127.5 - 1.0;
  }
  return Image::clipped(height, width, channels, range, std::move(px));
}

namespace {

bool is_png(std::span<const std::uint8_t> d) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return d.size() >= 8 && std::memcmp(d.data(), sig, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> d) {
  return d.size() >= 3 && d[0] == 0xFF && d[1] == 0xD8 && d[2] == 0xFF;
}

Image decode_png(std::span<const std::uint8_t> data, ValueRange range) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, data.data(), data.size())) {
    throw CorruptData(std::string("PNG header: ") + png.message);
  }
  // Alpha is dropped; grayscale stays single-channel.
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = gray ? 1 : 3;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw CorruptData("PNG data: " + msg);
  }
  return image_from_bytes(static_cast<int>(png.height), static_cast<int>(png.width), channels,
                          buffer, range);
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr) {}

// No C++ objects with non-trivial destructors live between setjmp and the
// potential longjmp in these two functions.
bool jpeg_decode_raw(const std::uint8_t* data, std::size_t size, std::uint8_t** out, int* height,
                     int* width, int* channels, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.output_message = jpeg_silent;
  std::uint8_t* volatile buffer = nullptr;
  if (setjmp(err.jump)) {
    std::strncpy(message, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_decompress(&cinfo);
    std::free(buffer);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int c = cinfo.output_components;
  const std::size_t stride = static_cast<std::size_t>(cinfo.output_width) * c;
  buffer = static_cast<std::uint8_t*>(std::malloc(stride * cinfo.output_height));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buffer + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  *height = static_cast<int>(cinfo.output_height);
  *width = static_cast<int>(cinfo.output_width);
  *channels = c;
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  *out = buffer;
  return true;
}

bool jpeg_encode_raw(const std::uint8_t* pixels, int height, int width, int channels, int quality,
                     unsigned char** out, unsigned long* out_size, char* message) {
  jpeg_compress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.output_message = jpeg_silent;
  if (setjmp(err.jump)) {
    std::strncpy(message, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_compress(&cinfo);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, out, out_size);
  cinfo.image_width = static_cast<JDIMENSION>(width);
  cinfo.image_height = static_cast<JDIMENSION>(height);
  cinfo.input_components = channels;
  cinfo.in_color_space = channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(pixels + stride * cinfo.next_scanline);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

Image decode_jpeg(std::span<const std::uint8_t> data, ValueRange range) {
  std::uint8_t* raw = nullptr;
  int h = 0, w = 0, c = 0;
  char message[JMSG_LENGTH_MAX] = {0};
  if (!jpeg_decode_raw(data.data(), data.size(), &raw, &h, &w, &c, message)) {
    throw CorruptData(std::string("JPEG data: ") + message);
  }
  std::vector<std::uint8_t> bytes(raw, raw + static_cast<std::size_t>(h) * w * c);
  std::free(raw);
  return image_from_bytes(h, w, c, bytes, range);
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> data, ValueRange range) {
  if (is_png(data)) return decode_png(data, range);
  if (is_jpeg(data)) return decode_jpeg(data, range);
  throw UnsupportedFormat("not a PNG or JPEG stream");
}

Image load_image(const fs::path& path, ValueRange range) {
  const Bytes data = read_file(path);
  try {
    return decode_image(data, range);
  } catch (const Error& e) {
    if (e.code() == "unsupported_format") throw UnsupportedFormat(path.string() + ": " + e.what());
    if (e.code() == "corrupt_data") throw CorruptData(path.string() + ": " + e.what());
    throw;
  }
}

Bytes encode_png(const Image& img) {
  const auto bytes = quantize_to_bytes(img);
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = img.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, bytes.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode: ") + png.message);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, bytes.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode: ") + png.message);
  }
  out.resize(size);
  return out;
}

void save_image(const Image& img, const fs::path& path) { write_file(path, encode_png(img)); }

Bytes encode_jpeg(const Image& img, int quality) {
  if (quality < 1 || quality > 100) {
    throw InvalidArgument("JPEG quality must be in [1, 100], got " + std::to_string(quality));
  }
  const auto bytes = quantize_to_bytes(img);
  unsigned char* out = nullptr;
  unsigned long size = 0;
  char message[JMSG_LENGTH_MAX] = {0};
  const bool ok = jpeg_encode_raw(bytes.data(), img.height(), img.width(), img.channels(), quality,
                                  &out, &size, message);
  Bytes result;
  if (ok) result.assign(out, out + size);
  std::free(out);
  if (!ok) throw IoError(std::string("JPEG encode: ") + message);
  return result;
}

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> d, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(d[offset + i]) << (8 * i);
  return v;
}

}  // namespace

Bytes encode_field(const DeformationField& field) {
  Bytes out{'D', 'F', 'L', 'D'};
  out.reserve(16 + field.values().size() * 4);
  put_u32(out, kFieldFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(field.height()));
  put_u32(out, static_cast<std::uint32_t>(field.width()));
  for (double v : field.values()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  return out;
}

DeformationField decode_field(std::span<const std::uint8_t> data) {
  if (data.size() < 16 || std::memcmp(data.data(), "DFLD", 4) != 0) {
    throw UnsupportedFormat("missing DFLD signature");
  }
  const std::uint32_t version = get_u32(data, 4);
  if (version != kFieldFormatVersion) {
    throw UnsupportedFormat("unsupported DFLD version " + std::to_string(version));
  }
  const std::uint32_t h = get_u32(data, 8);
  const std::uint32_t w = get_u32(data, 12);
  const std::size_t count = static_cast<std::size_t>(h) * w * 2;
  if (h == 0 || w == 0 || data.size() != 16 + count * 4) {
    throw CorruptData("DFLD payload size does not match header");
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = get_u32(data, 16 + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    values[i] = f;
  }
  return DeformationField(static_cast<int>(h), static_cast<int>(w), std::move(values));
}

void save_field(const DeformationField& field, const fs::path& path) {
  write_file(path, encode_field(field));
}

DeformationField load_field(const fs::path& path) { return decode_field(read_file(path)); }

SemanticMask load_mask(const fs::path& path) {
  const Image img = to_grayscale(load_image(path, ValueRange::unit));
  std::vector<std::uint8_t> values(img.size());
  const auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) values[i] = px[i] >= 0.5 ? 1 : 0;
  return SemanticMask(img.height(), img.width(), std::move(values));
}

void save_mask(const SemanticMask& mask, const fs::path& path) {
  std::vector<double> px(mask.values().begin(), mask.values().end());
  save_image(Image(mask.height(), mask.width(), 1, ValueRange::unit, std::move(px)), path);
}

}  // namespace facefuse
