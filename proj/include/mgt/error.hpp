#pragma once

#include <stdexcept>
#include <string>

namespace mgt {

// Error categories map 1:1 onto CLI exit codes:
//   io/format -> 1, config/data -> 2, numeric -> 3.
enum class ErrorKind {
  io,       // missing/unreadable/unwritable files
  format,   // malformed or unsupported file contents
  config,   // invalid user input, flags, or configuration
  data,     // dataset contract violations (quotas, labels, shapes)
  numeric,  // NaN/Inf fault in a numeric pipeline
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io:
    case ErrorKind::format:
      return 1;
    case ErrorKind::config:
    case ErrorKind::data:
      return 2;
    case ErrorKind::numeric:
      return 3;
  }
  return 1;
}

}  // namespace mgt
