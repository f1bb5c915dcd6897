#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gkg/config.hpp"
#include "gkg/params.hpp"

namespace gkg {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::int64_t step = 0;
  std::string rng_state;
  // Parameter values as stored (float32-exact).
  ParamStore params;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// JSON manifest; every tensor is base64 of its little-endian float32 values.
void save_checkpoint(const std::filesystem::path& file, const RunConfig& config, const ParamStore& params,
                     std::int64_t step, const std::string& rng_state);
Checkpoint load_checkpoint(const std::filesystem::path& file);

// Copies values by name into `target`, which must have the identical layout.
void restore_params(const ParamStore& source, ParamStore& target);

}  // namespace gkg
