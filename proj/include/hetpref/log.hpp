#pragma once

#include <atomic>
#include <cstddef>
#include <iostream>
#include <mutex>
#include <string_view>

namespace hetpref {

namespace detail {
inline std::atomic<std::size_t>& warning_counter() {
  static std::atomic<std::size_t> count{0};
  return count;
}
inline std::atomic<bool>& warnings_quiet() {
  static std::atomic<bool> quiet{false};
  return quiet;
}
}  // namespace detail

/// Emits a warning line on stderr and bumps the process-wide counter.
inline void warn(std::string_view message) {
  static std::mutex mu;
  ++detail::warning_counter();
  if (detail::warnings_quiet()) {
    return;
  }
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "warning: " << message << '\n';
}

inline std::size_t warning_count() { return detail::warning_counter(); }

// Tests and sweeps silence the stream but still count.
inline void set_warnings_quiet(bool quiet) { detail::warnings_quiet() = quiet; }

}  // namespace hetpref
