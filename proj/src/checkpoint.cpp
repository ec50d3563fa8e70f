#include "gaze/checkpoint.hpp"

#include <bit>
#include <cstdint>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <nlohmann/json.hpp>

#include "gaze/error.hpp"
#include "gaze/track.hpp"

namespace gaze {

using nlohmann::json;

std::string base64_encode(std::string_view bytes) {
  using namespace boost::archive::iterators;
  using Encoder = base64_from_binary<transform_width<std::string_view::const_iterator, 6, 8>>;
  std::string out(Encoder(bytes.begin()), Encoder(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::string base64_decode(std::string_view text) {
  using namespace boost::archive::iterators;
  using Decoder = transform_width<binary_from_base64<std::string_view::const_iterator>, 8, 6>;
  std::size_t padding = 0;
  while (!text.empty() && text.back() == '=') {
    text.remove_suffix(1);
    ++padding;
  }
  if (padding > 2 || text.find_first_not_of(
                         "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/") !=
                         std::string_view::npos) {
    throw Error(ErrorCode::BadFormat, "invalid base64");
  }
  std::string out(Decoder(text.begin()), Decoder(text.end()));
  // transform_width emits a trailing partial byte for the padded tail.
  out.resize(text.size() * 6 / 8);
  return out;
}

namespace {

const char* cam_target_name(CamTarget t) { return t == CamTarget::TrueClass ? "true_class" : "predicted"; }

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const auto& W = ckpt.params.W;
  std::string raw;
  raw.reserve(4 * static_cast<std::size_t>(W.size()));
  for (Eigen::Index r = 0; r < W.rows(); ++r) {
    for (Eigen::Index c = 0; c < W.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(W(r, c)));
      for (int i = 0; i < 4; ++i) raw.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
    }
  }
  const auto& cfg = ckpt.config;
  const json j{
      {"format", "gaze-checkpoint-1"},
      {"W", {{"rows", W.rows()}, {"cols", W.cols()}, {"dtype", "f32le"}, {"data", base64_encode(raw)}}},
      {"u", ckpt.params.u},
      {"filter_bank", {{"channels", ckpt.filter_channels}, {"seed", ckpt.filter_seed}}},
      {"config",
       {{"lambda_ac", cfg.lambda_ac},
        {"learning_rate", cfg.learning_rate},
        {"batch_size", cfg.batch_size},
        {"epochs", cfg.epochs},
        {"seed", cfg.seed},
        {"beta1", cfg.beta1},
        {"beta2", cfg.beta2},
        {"adam_epsilon", cfg.adam_epsilon},
        {"init_scale", cfg.init_scale},
        {"cam_target", cam_target_name(cfg.cam_target)}}}};
  return j.dump(2) + "\n";
}

Checkpoint decode_checkpoint(std::string_view json_text) {
  const json j = json::parse(json_text, nullptr, false);
  if (!j.is_object()) throw Error(ErrorCode::BadFormat, "checkpoint is not a JSON object");
  try {
    Checkpoint ckpt;
    const auto rows = j.at("W").at("rows").get<Eigen::Index>();
    const auto cols = j.at("W").at("cols").get<Eigen::Index>();
    const std::string raw = base64_decode(j.at("W").at("data").get<std::string>());
    if (rows <= 0 || cols <= 0 || raw.size() != static_cast<std::size_t>(4 * rows * cols)) {
      throw Error(ErrorCode::BadFormat, "weight payload does not match its shape");
    }
    ckpt.params.W.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows * cols; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + b])) << (8 * b);
      }
      ckpt.params.W(i / cols, i % cols) = std::bit_cast<float>(bits);
    }
    ckpt.params.u = j.at("u").get<double>();
    ckpt.filter_channels = j.at("filter_bank").at("channels").get<int>();
    ckpt.filter_seed = j.at("filter_bank").at("seed").get<std::uint64_t>();
    if (ckpt.filter_channels != cols) throw Error(ErrorCode::BadFormat, "filter bank size differs from W");
    if (j.contains("config")) {
      const auto& c = j["config"];
      auto& cfg = ckpt.config;
      cfg.lambda_ac = c.value("lambda_ac", cfg.lambda_ac);
      cfg.learning_rate = c.value("learning_rate", cfg.learning_rate);
      cfg.batch_size = c.value("batch_size", cfg.batch_size);
      cfg.epochs = c.value("epochs", cfg.epochs);
      cfg.seed = c.value("seed", cfg.seed);
      cfg.beta1 = c.value("beta1", cfg.beta1);
      cfg.beta2 = c.value("beta2", cfg.beta2);
      cfg.adam_epsilon = c.value("adam_epsilon", cfg.adam_epsilon);
      cfg.init_scale = c.value("init_scale", cfg.init_scale);
      cfg.cam_target = c.value("cam_target", std::string("predicted")) == "true_class"
                           ? CamTarget::TrueClass
                           : CamTarget::Predicted;
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadFormat, e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace gaze
