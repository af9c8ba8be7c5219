#include "telekit/error.hpp"

namespace telekit {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::malformed_json: return "malformed-json";
        case ErrorCode::missing_field: return "missing-field";
        case ErrorCode::id_category_mismatch: return "id-category-mismatch";
        case ErrorCode::unknown_category: return "unknown-category";
        case ErrorCode::invalid_id: return "invalid-id";
        case ErrorCode::empty_content: return "empty-content";
        case ErrorCode::invalid_metadata: return "invalid-metadata";
        case ErrorCode::io_failure: return "io-failure";
        case ErrorCode::no_root: return "no-root";
        case ErrorCode::include_cycle: return "include-cycle";
        case ErrorCode::category_excluded: return "category-excluded";
        case ErrorCode::generation_parse: return "generation-parse";
        case ErrorCode::comparability: return "comparability";
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::gateway_failure: return "gateway-failure";
        case ErrorCode::config_invalid: return "config-invalid";
        case ErrorCode::all_chunks_failed: return "all-chunks-failed";
        case ErrorCode::missing_digest: return "missing-digest";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::optional<std::size_t> line)
    : std::runtime_error(line ? "line " + std::to_string(*line) + ": " + message : message),
      code_(code),
      line_(line) {}

}  // namespace telekit
