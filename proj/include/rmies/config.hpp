// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/core.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rmies {

/// Plain-text configuration:
///
///     # comment
///     schema = 1
///     [section name]
///     key = value
///     key = repeated values are kept in order
///
/// Keys before the first section belong to the unnamed section "". Sections
/// may repeat (e.g. one `[class N]` block per template).
class KeyValueConfig {
 public:
  static constexpr int kSchemaVersion = 1;

  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;

    std::optional<std::string> find(const std::string& key) const;
    std::vector<std::string> all(const std::string& key) const;
  };

  KeyValueConfig() = default;

  /// ParseError on malformed lines; ConfigError on an unsupported `schema`.
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  const std::vector<Section>& sections() const { return sections_; }
  const Section* section(const std::string& name) const;

  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& section, const std::string& key,
                               std::vector<double> fallback) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

  std::string dump() const;

 private:
  Section& ensure(const std::string& name);
  std::vector<Section> sections_;
};

double parse_number(const std::string& text, const std::string& context);
/// Whitespace- or comma-separated numbers.
std::vector<double> parse_number_list(const std::string& text, const std::string& context);

}  // namespace rmies
