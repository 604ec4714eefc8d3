#include "ppgfusion/config.hpp"

#include "ppgfusion/error.hpp"

#include <charconv>
#include <cmath>

namespace ppgfusion {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& s, const char* what) {
  T value{};
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw InvalidConfig(std::string("expected ") + what + ", got '" + s + "'");
  return value;
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::string_view text) {
  std::vector<KeyValue> out;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw InvalidConfig("line " + std::to_string(line_no) + ": expected key = value");
    KeyValue kv{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), line_no};
    if (kv.key.empty()) throw InvalidConfig("line " + std::to_string(line_no) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

double parse_double(const std::string& s) {
  const double v = parse_number<double>(s, "a number");
  if (!std::isfinite(v)) throw InvalidConfig("non-finite value '" + s + "'");
  return v;
}

int parse_int(const std::string& s) { return parse_number<int>(s, "an integer"); }

std::uint64_t parse_u64(const std::string& s) { return parse_number<std::uint64_t>(s, "an unsigned integer"); }

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw InvalidConfig("expected a boolean, got '" + s + "'");
}

}  // namespace ppgfusion
