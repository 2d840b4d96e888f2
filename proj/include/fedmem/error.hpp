#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fedmem {

enum class ErrorCode {
    invalid_argument,
    missing_field,
    invalid_partition,
    empty_eval_set,
    empty_dataset,
    incompatible_models,
    backend_error,
    empty_index,
    empty_query,
    undefined_ratio,
    invalid_weights,
    undefined_inter,
    inconsistent_input,
    config_error,
    data_error,
    backend_failure_threshold,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code next to the message.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), m_code(code) {}

    ErrorCode code() const noexcept { return m_code; }

  private:
    ErrorCode m_code;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what)
{
    throw Error(code, std::string(to_string(code)) + ": " + what);
}

}  // namespace fedmem
