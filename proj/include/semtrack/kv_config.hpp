#pragma once

// "key = value" configuration files. Blank lines and text after '#' are
// ignored; keys are dotted names such as "train.netc.lr". Every key in a file
// must be consumed by some reader, so typos surface as errors.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace semtrack {

class KvConfig {
 public:
  static KvConfig parse(std::string_view text, const std::string& source = "<string>");
  static KvConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  bool empty() const { return entries_.empty(); }

  // Each overload leaves `out` untouched when the key is absent and throws
  // (naming source and line) when the value does not parse.
  void get(const std::string& key, std::string& out) const;
  void get(const std::string& key, double& out) const;
  template <typename U>
    requires(std::is_unsigned_v<U> && !std::is_same_v<U, bool>)
  void get(const std::string& key, U& out) const {
    unsigned long long v = out;
    get_unsigned(key, v);
    out = static_cast<U>(v);
  }
  void get(const std::string& key, bool& out) const;
  // Comma-separated list.
  void get(const std::string& key, std::vector<std::string>& out) const;

  // Throws listing every key no get() call has read.
  void check_all_used() const;

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
    mutable bool used = false;
  };
  void get_unsigned(const std::string& key, unsigned long long& out) const;
  const Entry* find(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const Entry& e, const std::string& what) const;

  std::string source_;
  std::map<std::string, Entry> entries_;
};

}  // namespace semtrack
