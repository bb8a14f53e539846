#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mftp {

// Machine-readable failure class. The CLI maps each one to a distinct exit code.
enum class ErrorCategory {
  dimension,
  validation,
  insufficient_data,
  numeric,
  fit,
  policy,
  estimate,
  diagnostic,
  config,
  io,
  scenario,
  internal,
};

std::string_view to_string(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message);

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] void throw_dimension(const std::string& what, std::size_t expected, std::size_t actual);

}  // namespace mftp
