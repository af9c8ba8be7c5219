#include "telekit/text.hpp"

#include <cctype>
#include <memory>
#include <stdexcept>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

namespace telekit::text {

namespace {

// Length of the well-formed UTF-8 sequence starting at s[i], or 0 when the
// bytes there are ill-formed (per the Unicode table of well-formed sequences).
std::size_t valid_sequence_length(std::string_view s, std::size_t i) {
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char b0 = byte(i);
    const std::size_t left = s.size() - i;
    if (b0 < 0x80) return 1;
    if (b0 >= 0xC2 && b0 <= 0xDF) {
        return (left >= 2 && (byte(i + 1) & 0xC0) == 0x80) ? 2 : 0;
    }
    if (b0 >= 0xE0 && b0 <= 0xEF) {
        if (left < 3) return 0;
        const unsigned char b1 = byte(i + 1);
        unsigned char lo = 0x80, hi = 0xBF;
        if (b0 == 0xE0) lo = 0xA0;
        if (b0 == 0xED) hi = 0x9F;
        if (b1 < lo || b1 > hi) return 0;
        return (byte(i + 2) & 0xC0) == 0x80 ? 3 : 0;
    }
    if (b0 >= 0xF0 && b0 <= 0xF4) {
        if (left < 4) return 0;
        const unsigned char b1 = byte(i + 1);
        unsigned char lo = 0x80, hi = 0xBF;
        if (b0 == 0xF0) lo = 0x90;
        if (b0 == 0xF4) hi = 0x8F;
        if (b1 < lo || b1 > hi) return 0;
        if ((byte(i + 2) & 0xC0) != 0x80 || (byte(i + 3) & 0xC0) != 0x80) return 0;
        return 4;
    }
    return 0;
}

std::size_t lead_length(unsigned char b) {
    if (b < 0x80) return 1;
    if ((b & 0xE0) == 0xC0) return 2;
    if ((b & 0xF0) == 0xE0) return 3;
    if ((b & 0xF8) == 0xF0) return 4;
    return 1;
}

const icu::Normalizer2& nfc_normalizer() {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status) || n == nullptr) {
        throw std::runtime_error("ICU NFC normalizer unavailable");
    }
    return *n;
}

}  // namespace

std::string sanitize_utf8(std::string_view input) {
    std::string out;
    out.reserve(input.size());
    std::size_t i = 0;
    while (i < input.size()) {
        const std::size_t n = valid_sequence_length(input, i);
        if (n > 0) {
            out.append(input.substr(i, n));
            i += n;
        } else {
            out.append("\xEF\xBF\xBD");
            ++i;
            while (i < input.size() &&
                   (static_cast<unsigned char>(input[i]) & 0xC0) == 0x80 &&
                   valid_sequence_length(input, i) == 0) {
                ++i;
            }
        }
    }
    return out;
}

bool is_valid_utf8(std::string_view input) {
    std::size_t i = 0;
    while (i < input.size()) {
        const std::size_t n = valid_sequence_length(input, i);
        if (n == 0) return false;
        i += n;
    }
    return true;
}

std::size_t count_scalars(std::string_view input) {
    std::size_t count = 0;
    for (unsigned char c : input) {
        if ((c & 0xC0) != 0x80) ++count;
    }
    return count;
}

std::string_view take_scalars(std::string_view input, std::size_t n) {
    std::size_t i = 0;
    while (i < input.size() && n > 0) {
        i += lead_length(static_cast<unsigned char>(input[i]));
        --n;
    }
    return input.substr(0, std::min(i, input.size()));
}

std::vector<std::string_view> split_scalars(std::string_view input, std::size_t n) {
    std::vector<std::string_view> pieces;
    if (n == 0) return pieces;
    while (!input.empty()) {
        std::string_view head = take_scalars(input, n);
        pieces.push_back(head);
        input.remove_prefix(head.size());
    }
    return pieces;
}

std::string nfc(std::string_view input) {
    const icu::Normalizer2& norm = nfc_normalizer();
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(
        icu::StringPiece(input.data(), static_cast<int32_t>(input.size())));
    UErrorCode status = U_ZERO_ERROR;
    if (norm.isNormalized(u, status) && U_SUCCESS(status)) {
        return std::string(input);
    }
    status = U_ZERO_ERROR;
    icu::UnicodeString normalized = norm.normalize(u, status);
    if (U_FAILURE(status)) return std::string(input);
    std::string out;
    normalized.toUTF8String(out);
    return out;
}

std::string case_fold(std::string_view input) {
    bool ascii = true;
    for (unsigned char c : input) {
        if (c >= 0x80) {
            ascii = false;
            break;
        }
    }
    std::string out;
    if (ascii) {
        out.reserve(input.size());
        for (unsigned char c : input) out.push_back(static_cast<char>(std::tolower(c)));
        return out;
    }
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(
        icu::StringPiece(input.data(), static_cast<int32_t>(input.size())));
    u.foldCase();
    u.toUTF8String(out);
    return out;
}

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

std::vector<std::string_view> words(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        const std::size_t start = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

}  // namespace telekit::text
