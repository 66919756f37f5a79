#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace avs {

/// Raised when an operation would break a domain invariant. Always signals a
/// caller bug rather than bad input.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed external input (files, configs, CLI arguments).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grammar error in a line-oriented file; carries the 1-based line number.
class FormatError : public InputError {
 public:
  FormatError(std::string source, std::size_t line, const std::string& what)
      : InputError(source + ":" + std::to_string(line) + ": " + what),
        source_(std::move(source)),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

/// Backend failure that may succeed on retry (timeouts, 5xx, broken envelope).
class TransientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransportError : public TransientError {
 public:
  using TransientError::TransientError;
};

/// Model output that does not conform to the expected grammar.
class ParseFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A reformulation that leaves the query unchanged.
class DuplicateReformulation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingPlaceholder : public std::runtime_error {
 public:
  explicit MissingPlaceholder(std::string name)
      : std::runtime_error("missing binding for placeholder {" + name + "}"),
        name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

}  // namespace avs
