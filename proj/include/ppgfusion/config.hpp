#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ppgfusion {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// `key = value` lines; blank lines and `#` comments are skipped, surrounding
/// whitespace trimmed. Throws InvalidConfig on a line without '='.
std::vector<KeyValue> parse_key_values(std::string_view text);

double parse_double(const std::string& s);
int parse_int(const std::string& s);
std::uint64_t parse_u64(const std::string& s);
bool parse_bool(const std::string& s);

}  // namespace ppgfusion
