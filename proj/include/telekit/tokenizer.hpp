#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace telekit {

using TokenId = std::uint32_t;

// Local tokenizers used for corpus statistics, audit chunking and packing.
// Implementations may throw on input they cannot encode.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::string name() const = 0;
    virtual std::vector<TokenId> encode(std::string_view text) const = 0;
};

// One token per byte, ids 0..255.
class ByteTokenizer final : public Tokenizer {
public:
    std::string name() const override { return "byte"; }
    std::vector<TokenId> encode(std::string_view text) const override;
};

// Splits on whitespace; runs of letters/digits form a word and every other
// non-space byte is its own token. Ids are hashed into [0, vocab_size).
class WordTokenizer final : public Tokenizer {
public:
    explicit WordTokenizer(std::uint32_t vocab_size = 50257) : vocab_size_(vocab_size) {}
    std::string name() const override { return "word"; }
    std::vector<TokenId> encode(std::string_view text) const override;

private:
    std::uint32_t vocab_size_;
};

// "byte" or "word"; throws Error(invalid_argument) otherwise.
std::unique_ptr<Tokenizer> make_tokenizer(std::string_view name);

}  // namespace telekit
