// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "adarank/model.hpp"
#include "adarank/train.hpp"

namespace adarank {

/// Flat `key = value` text. Blank lines and lines starting with '#' are
/// ignored; a repeated key keeps its last value.
std::map<std::string, std::string> parse_key_values(std::string_view text, std::string_view origin = "config");
std::map<std::string, std::string> load_key_values(const std::filesystem::path& file);

/// Model, training, and tokenization settings read from one config file.
struct Settings {
  ModelConfig model;
  TrainConfig train;
  std::size_t max_len = 16;  // tokens per text

  /// Applies every pair; unknown keys and malformed values throw.
  void apply(const std::map<std::string, std::string>& pairs);
  void validate() const;
};

Settings load_settings(const std::filesystem::path& file);

}  // namespace adarank
