#include "semtrack/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "semtrack/error.hpp"

namespace semtrack {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KvConfig KvConfig::parse(std::string_view text, const std::string& source) {
  KvConfig cfg;
  cfg.source_ = source;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw FormatError(where + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw FormatError(where + ": empty key");
    if (!cfg.entries_.emplace(key, Entry{value, line_no}).second) {
      throw FormatError(where + ": duplicate key '" + key + "'");
    }
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const KvConfig::Entry* KvConfig::find(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  it->second.used = true;
  return &it->second;
}

void KvConfig::fail(const std::string& key, const Entry& e, const std::string& what) const {
  throw FormatError(source_ + ":" + std::to_string(e.line) + ": " + key + ": " + what + " (got '" +
                    e.value + "')");
}

void KvConfig::get(const std::string& key, std::string& out) const {
  if (const Entry* e = find(key)) out = e->value;
}

void KvConfig::get(const std::string& key, double& out) const {
  const Entry* e = find(key);
  if (!e) return;
  double v = 0.0;
  const char* end = e->value.data() + e->value.size();
  const auto [ptr, ec] = std::from_chars(e->value.data(), end, v);
  if (ec != std::errc() || ptr != end) fail(key, *e, "expected a number");
  out = v;
}

void KvConfig::get_unsigned(const std::string& key, unsigned long long& out) const {
  const Entry* e = find(key);
  if (!e) return;
  unsigned long long v = 0;
  const char* end = e->value.data() + e->value.size();
  const auto [ptr, ec] = std::from_chars(e->value.data(), end, v);
  if (ec != std::errc() || ptr != end) fail(key, *e, "expected a non-negative integer");
  out = v;
}

void KvConfig::get(const std::string& key, bool& out) const {
  const Entry* e = find(key);
  if (!e) return;
  if (e->value == "true" || e->value == "1" || e->value == "yes") {
    out = true;
  } else if (e->value == "false" || e->value == "0" || e->value == "no") {
    out = false;
  } else {
    fail(key, *e, "expected true or false");
  }
}

void KvConfig::get(const std::string& key, std::vector<std::string>& out) const {
  const Entry* e = find(key);
  if (!e) return;
  std::vector<std::string> items;
  std::string_view rest = e->value;
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view item = trim(rest.substr(0, comma));
    if (item.empty()) fail(key, *e, "empty list item");
    items.emplace_back(item);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  out = std::move(items);
}

void KvConfig::check_all_used() const {
  std::string unknown;
  for (const auto& [key, e] : entries_) {
    if (!e.used) unknown += (unknown.empty() ? "" : ", ") + key + " (line " + std::to_string(e.line) + ")";
  }
  if (!unknown.empty()) throw FormatError(source_ + ": unknown keys: " + unknown);
}

}  // namespace semtrack
