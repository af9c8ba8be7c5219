#include "telekit/tokenizer.hpp"

#include <cctype>

#include "telekit/error.hpp"
#include "telekit/hash.hpp"

namespace telekit {

std::vector<TokenId> ByteTokenizer::encode(std::string_view text) const {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(c);
    return ids;
}

std::vector<TokenId> WordTokenizer::encode(std::string_view text) const {
    std::vector<TokenId> ids;
    const auto is_word = [](unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; };
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        if (is_word(c)) {
            while (j < text.size() && is_word(static_cast<unsigned char>(text[j]))) ++j;
        }
        ids.push_back(static_cast<TokenId>(fnv1a64(text.substr(i, j - i)) % vocab_size_));
        i = j;
    }
    return ids;
}

std::unique_ptr<Tokenizer> make_tokenizer(std::string_view name) {
    if (name == "byte") return std::make_unique<ByteTokenizer>();
    if (name == "word") return std::make_unique<WordTokenizer>();
    throw Error(ErrorCode::invalid_argument, "unknown tokenizer: " + std::string(name));
}

}  // namespace telekit
