#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace telekit {

// Machine-readable error codes. The string form (to_string) is what appears
// in JSONL error logs and CLI messages.
enum class ErrorCode {
    malformed_json,
    missing_field,
    id_category_mismatch,
    unknown_category,
    invalid_id,
    empty_content,
    invalid_metadata,
    io_failure,
    no_root,
    include_cycle,
    category_excluded,
    generation_parse,
    comparability,
    invalid_argument,
    gateway_failure,
    config_invalid,
    all_chunks_failed,
    missing_digest,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message,
          std::optional<std::size_t> line = std::nullopt);

    ErrorCode code() const noexcept { return code_; }
    std::optional<std::size_t> line() const noexcept { return line_; }

private:
    ErrorCode code_;
    std::optional<std::size_t> line_;
};

}  // namespace telekit
