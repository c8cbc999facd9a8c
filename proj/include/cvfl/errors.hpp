#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>

namespace cvfl {

/// Invalid configuration (bad bounds, malformed spec, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input outside an operation's domain (e.g. position beyond coverage).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed binary/file input.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using WarnHandler = std::function<void(const std::string&)>;

namespace detail {

inline WarnHandler& warn_handler() {
  static WarnHandler handler = [](const std::string& msg) {
    std::cerr << "[cvfl] warning: " << msg << '\n';
  };
  return handler;
}

inline void warn(const std::string& msg) { warn_handler()(msg); }

}  // namespace detail

/// Replace the warning sink (tests use this to capture diagnostics).
inline WarnHandler set_warn_handler(WarnHandler h) {
  return std::exchange(detail::warn_handler(), std::move(h));
}

}  // namespace cvfl
