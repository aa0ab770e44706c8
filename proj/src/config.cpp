// SPDX-License-Identifier: Apache-2.0

#include "adarank/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace adarank {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text, std::string_view origin) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(std::string(origin) + ":" + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw std::invalid_argument(std::string(origin) + ":" + std::to_string(number) + ": empty key");
    out[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> load_key_values(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str(), file.string());
}

void Settings::apply(const std::map<std::string, std::string>& pairs) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto size = [](std::size_t& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<std::size_t>(k, v); };
  };
  auto u64 = [](std::uint64_t& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<std::uint64_t>(k, v); };
  };
  auto real = [](double& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_double(k, v); };
  };
  const std::map<std::string, Setter> setters = {
      {"num_layers", size(model.num_layers)},
      {"d_model", size(model.d_model)},
      {"num_heads", size(model.num_heads)},
      {"d_ff", size(model.d_ff)},
      {"vocab_size", size(model.vocab_size)},
      {"max_seq_len", size(model.max_seq_len)},
      {"num_classes", size(model.num_classes)},
      {"init_seed", u64(model.init_seed)},
      {"learning_rate", real(train.learning_rate)},
      {"batch_size", size(train.batch_size)},
      {"epochs", size(train.epochs)},
      {"beta1", real(train.beta1)},
      {"beta2", real(train.beta2)},
      {"epsilon", real(train.epsilon)},
      {"seed", u64(train.seed)},
      {"max_len", size(max_len)},
  };
  for (const auto& [key, value] : pairs) {
    auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->second(key, value);
  }
}

void Settings::validate() const {
  model.validate();
  train.validate();
  if (max_len == 0 || max_len > model.max_seq_len) {
    throw std::invalid_argument("max_len must lie in [1, max_seq_len]");
  }
}

Settings load_settings(const std::filesystem::path& file) {
  Settings s;
  s.apply(load_key_values(file));
  return s;
}

}  // namespace adarank
