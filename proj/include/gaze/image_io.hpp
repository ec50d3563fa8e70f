#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace gaze {

using Gray8 = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 8-bit grayscale PNG, encoded in memory.
std::string encode_png(const Gray8& pixels);
Gray8 decode_png(std::string_view bytes);

void write_png(const std::filesystem::path& path, const Gray8& pixels);
Gray8 read_png(const std::filesystem::path& path);

}  // namespace gaze
