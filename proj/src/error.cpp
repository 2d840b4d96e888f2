#include "fedmem/error.hpp"

namespace fedmem {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::missing_field: return "missing-field";
    case ErrorCode::invalid_partition: return "invalid-partition";
    case ErrorCode::empty_eval_set: return "empty-eval-set";
    case ErrorCode::empty_dataset: return "empty-dataset";
    case ErrorCode::incompatible_models: return "incompatible-models";
    case ErrorCode::backend_error: return "backend-error";
    case ErrorCode::empty_index: return "empty-index";
    case ErrorCode::empty_query: return "empty-query";
    case ErrorCode::undefined_ratio: return "undefined-ratio";
    case ErrorCode::invalid_weights: return "invalid-weights";
    case ErrorCode::undefined_inter: return "undefined-inter";
    case ErrorCode::inconsistent_input: return "inconsistent-input";
    case ErrorCode::config_error: return "config-error";
    case ErrorCode::data_error: return "data-error";
    case ErrorCode::backend_failure_threshold: return "backend-failure-threshold";
    }
    return "unknown";
}

}  // namespace fedmem
