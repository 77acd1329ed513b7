#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>

namespace nnergm {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a precondition: bad sizes, mismatched dimensions, bad indices.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed input text (edge lists, CSV, JSON documents).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not produce a usable answer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {
inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return handler;
}
}  // namespace detail

/// Replace the sink for non-fatal diagnostics. Returns the previous handler.
inline WarningHandler set_warning_handler(WarningHandler handler) {
  return std::exchange(detail::warning_handler(), std::move(handler));
}

inline void warn(const std::string& msg) {
  if (detail::warning_handler()) detail::warning_handler()(msg);
}

}  // namespace nnergm
