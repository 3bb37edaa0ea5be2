#pragma once

#include <stdexcept>
#include <string>

namespace mhub {

// Malformed or inconsistent user input: bad files, out-of-range parameters,
// violated preconditions. Maps to exit code 1 in the CLI.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parse failure at a known line of a text document (1-based).
class ParseError : public InputError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace mhub
