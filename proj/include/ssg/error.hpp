#pragma once

#include <stdexcept>
#include <string>

namespace ssg {

// Base of all engine errors. `kind()` is the machine-readable class the CLI
// prints before the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error("shape_error", w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error("numeric_error", w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error("format_error", w) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& w) : Error("validation_error", w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error("io_error", w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("config_error", w) {}
};
struct StateError : Error {
  explicit StateError(const std::string& w) : Error("state_error", w) {}
};

}  // namespace ssg
