#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "gaze/attention_net.hpp"

namespace gaze {

struct Checkpoint {
  ClassifierParams params;
  int filter_channels = 64;
  std::uint64_t filter_seed = 0;
  TrainConfig config;
};

/// JSON document; W is stored as base64 of little-endian f32, row-major.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view json_text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace gaze
