#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace telekit::text {

// Replaces every ill-formed UTF-8 sequence with U+FFFD.
std::string sanitize_utf8(std::string_view input);
bool is_valid_utf8(std::string_view input);

// Unicode scalar value counts and slicing. Input must be valid UTF-8.
std::size_t count_scalars(std::string_view input);
std::string_view take_scalars(std::string_view input, std::size_t n);
// Splits into consecutive pieces of at most `n` scalars each.
std::vector<std::string_view> split_scalars(std::string_view input, std::size_t n);

std::string nfc(std::string_view input);
std::string case_fold(std::string_view input);

std::string_view trim(std::string_view s);
bool is_blank(std::string_view s);

// Whitespace-delimited words.
std::vector<std::string_view> words(std::string_view s);

}  // namespace telekit::text
