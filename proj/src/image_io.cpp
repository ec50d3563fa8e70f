#include "gaze/image_io.hpp"

#include <cstring>
#include <vector>

#include <png.h>

#include "gaze/error.hpp"
#include "gaze/track.hpp"

namespace gaze {

namespace {

void on_png_error(png_structp png, png_const_charp message) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  *text = message;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct ReadCursor {
  std::string_view bytes;
  std::size_t offset = 0;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
  cursor->offset += length;
}

void write_to_memory(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void flush_memory(png_structp) {}

}  // namespace

namespace {

// Runs the libpng write sequence; returns false after a libpng error. Kept free of
// non-trivial locals so nothing is skipped by the longjmp.
bool run_png_write(png_structp png, png_infop info, std::string* out, png_uint_32 width,
                   png_uint_32 height, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_write_fn(png, out, write_to_memory, flush_memory);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_rows(png, rows, height);
  png_write_end(png, nullptr);
  return true;
}

}  // namespace

std::string encode_png(const Gray8& pixels) {
  if (pixels.rows() == 0 || pixels.cols() == 0) throw Error(ErrorCode::BadGeometry, "empty image");
  std::string message;
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, on_png_error,
                                            on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "libpng allocation failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(pixels.rows()));
  for (Eigen::Index r = 0; r < pixels.rows(); ++r) {
    rows[static_cast<std::size_t>(r)] = const_cast<png_bytep>(pixels.data() + r * pixels.cols());
  }
  const bool ok = run_png_write(png, info, &out, static_cast<png_uint_32>(pixels.cols()),
                                static_cast<png_uint_32>(pixels.rows()), rows.data());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw Error(ErrorCode::IoError, "PNG encode: " + message);
  return out;
}

namespace {

bool run_png_read_header(png_structp png, png_infop info, ReadCursor* cursor) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_read_fn(png, cursor, read_from_memory);
  png_read_info(png, info);

  // Normalise whatever arrives to 8-bit gray.
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  return true;
}

bool run_png_read_rows(png_structp png, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

}  // namespace

Gray8 decode_png(std::string_view bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw Error(ErrorCode::BadFormat, "not a PNG stream");
  }
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, on_png_error,
                                           on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoError, "libpng allocation failed");
  }
  ReadCursor cursor{bytes};
  if (!run_png_read_header(png, info, &cursor)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::BadFormat, "PNG decode: " + message);
  }
  const auto width = static_cast<Eigen::Index>(png_get_image_width(png, info));
  const auto height = static_cast<Eigen::Index>(png_get_image_height(png, info));
  Gray8 pixels(height, width);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (Eigen::Index r = 0; r < height; ++r) {
    rows[static_cast<std::size_t>(r)] = pixels.data() + r * width;
  }
  const bool ok = run_png_read_rows(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw Error(ErrorCode::BadFormat, "PNG decode: " + message);
  return pixels;
}

void write_png(const std::filesystem::path& path, const Gray8& pixels) {
  write_file(path, encode_png(pixels));
}

Gray8 read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

}  // namespace gaze
