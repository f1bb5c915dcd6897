#include "gkg/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "gkg/errors.hpp"

namespace gkg {
namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kAlphabet[i])] = i;
  if (text.size() % 4 != 0) throw std::runtime_error("base64: length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char ch = text[i + j];
      if (ch == '=' && i + 4 == text.size() && j >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      const int d = lookup[static_cast<unsigned char>(ch)];
      if (d < 0 || pad) throw std::runtime_error("base64: invalid character");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& file, const RunConfig& config, const ParamStore& params,
                     std::int64_t step, const std::string& rng_state) {
  static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["config"] = to_json(config);
  j["step"] = step;
  j["rng_state"] = rng_state;
  j["param_seed"] = params.rng_seed();
  j["params"] = nlohmann::json::array();
  for (const auto& p : params) {
    std::vector<std::uint8_t> bytes(p.value.size() * sizeof(float));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float f = static_cast<float>(p.value[i]);
      std::memcpy(bytes.data() + i * sizeof(float), &f, sizeof(float));
    }
    j["params"].push_back({{"name", p.name}, {"shape", p.value.shape()}, {"data", base64_encode(bytes)}});
  }
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
  out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read checkpoint " + file.string());
  const auto j = nlohmann::json::parse(in);
  if (j.at("format_version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + file.string());
  }
  Checkpoint ck{parse_run_config(j.at("config")), j.at("step").get<std::int64_t>(),
                j.at("rng_state").get<std::string>(), ParamStore(j.at("param_seed").get<std::uint64_t>())};
  for (const auto& entry : j.at("params")) {
    const Shape shape = entry.at("shape").get<Shape>();
    const auto bytes = base64_decode(entry.at("data").get<std::string>());
    if (bytes.size() != shape_numel(shape) * sizeof(float)) {
      throw std::runtime_error("checkpoint tensor '" + entry.at("name").get<std::string>() + "' has wrong byte count");
    }
    std::vector<double> values(shape_numel(shape));
    for (std::size_t i = 0; i < values.size(); ++i) {
      float f;
      std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
      values[i] = f;
    }
    ck.params.add(entry.at("name").get<std::string>(), Tensor(shape, std::move(values)));
  }
  return ck;
}

void restore_params(const ParamStore& source, ParamStore& target) {
  if (source.size() != target.size()) {
    throw DimensionError("checkpoint holds " + std::to_string(source.size()) + " tensors, model expects " +
                         std::to_string(target.size()));
  }
  for (auto& p : target) {
    const auto id = source.find(p.name);
    if (!id) throw DimensionError("checkpoint is missing parameter '" + p.name + "'");
    const Tensor& v = source[*id].value;
    if (v.shape() != p.value.shape()) {
      throw DimensionError("parameter '" + p.name + "' has shape " + shape_string(v.shape()) + ", model expects " +
                           shape_string(p.value.shape()));
    }
    p.value = v;
  }
}

}  // namespace gkg
