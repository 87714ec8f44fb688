#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ccu/model.hpp"

namespace ccu {

// Free-form key/value lines kept alongside the parameters (seed, config echo,
// data domain). Order is preserved; keys must be single tokens.
using ModelMeta = std::vector<std::pair<std::string, std::string>>;

struct LoadedModel {
  CcuModel model;
  ModelMeta meta;
  std::uint64_t fingerprint = 0;

  // Value of the first meta entry with this key, or `fallback`.
  std::string meta_value(std::string_view key, std::string fallback = {}) const;
};

inline constexpr int kModelFormatVersion = 1;

/// 64-bit FNV-1a over the canonical text of the parameter blocks.
std::uint64_t model_fingerprint(const CcuModel& model);
std::string fingerprint_hex(std::uint64_t fp);

/// Versioned text format; doubles carry 17 significant digits so a
/// save/load/save cycle is byte-identical.
std::string serialize_model(const CcuModel& model, const ModelMeta& meta = {});
/// Throws ParseError on malformed input or a fingerprint mismatch.
LoadedModel parse_model(std::string_view text);

void save_model(const std::filesystem::path& path, const CcuModel& model, const ModelMeta& meta = {});
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace ccu
