#pragma once

#include <cstdint>
#include <string>

#include "grtp/nn/params.hpp"

namespace grtp::nn {

/// Self-describing parameter container: versioned header, block names and
/// shapes, raw 64-bit values, plus the serialized config and seed that
/// produced the model. config_json must be a valid JSON document.
void save_params(const std::string& path, const ModelParams& params,
                 const std::string& config_json, std::uint64_t seed);

struct LoadedParams {
  ModelParams params;
  std::string config_json;
  std::uint64_t seed = 0;
  int version = 0;
};

LoadedParams load_params(const std::string& path);

}  // namespace grtp::nn
