#pragma once

// Structured key=value log lines on stderr. Quiet by default.

#include <atomic>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string_view>

namespace madeasd::log {

enum class Level { Quiet = 0, Info = 1, Debug = 2 };

inline std::atomic<int>& level_storage() {
  static std::atomic<int> level{static_cast<int>(Level::Quiet)};
  return level;
}

inline void set_level(Level l) { level_storage().store(static_cast<int>(l)); }
inline bool enabled(Level l) { return level_storage().load() >= static_cast<int>(l); }

inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

namespace detail {
inline void append(std::ostringstream&) {}
template <class K, class V, class... Rest>
void append(std::ostringstream& os, K&& key, V&& value, Rest&&... rest) {
  os << ' ' << key << '=' << value;
  append(os, std::forward<Rest>(rest)...);
}
}  // namespace detail

/// emit(Level::Info, "ssdae", "epoch", 3, "loss", 0.12) -> "[ssdae] epoch=3 loss=0.12"
template <class... KV>
void emit(Level l, std::string_view module, KV&&... kv) {
  if (!enabled(l)) return;
  std::ostringstream os;
  os.precision(8);
  os << '[' << module << ']';
  detail::append(os, std::forward<KV>(kv)...);
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::clog << os.str() << '\n';
}

// Warnings are always printed.
inline void warn(std::string_view module, std::string_view message) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::clog << '[' << module << "] warning: " << message << '\n';
}

}  // namespace madeasd::log
