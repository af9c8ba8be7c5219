#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "telekit/corpus.hpp"
#include "telekit/gateway.hpp"
#include "telekit/hash.hpp"

namespace tk_test {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        static std::uint64_t counter = 0;
        const auto base = fs::temp_directory_path();
        for (;;) {
            path_ = base / ("telekit-test-" + telekit::hex64(telekit::mix64(
                                                  static_cast<std::uint64_t>(::getpid()) * 1000003 + counter++)));
            if (fs::create_directory(path_)) break;
        }
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

// Small generator kit for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    std::uint64_t u64() { return rng_(); }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
    std::size_t range(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return uniform(0, 1) < p; }

    std::string word(std::size_t min_len = 1, std::size_t max_len = 9) {
        static const char letters[] = "abcdefghijklmnopqrstuvwxyz";
        std::string w;
        const auto n = range(min_len, max_len);
        for (std::size_t i = 0; i < n; ++i) w.push_back(letters[below(26)]);
        return w;
    }

    std::string sentence(std::size_t words_lo = 3, std::size_t words_hi = 12) {
        std::string s;
        const auto n = range(words_lo, words_hi);
        for (std::size_t i = 0; i < n; ++i) {
            if (i) s.push_back(' ');
            s += word();
        }
        return s + ".";
    }

    // Mix of ASCII, accented Latin, CJK, emoji, escapes that need JSON quoting.
    std::string unicode_text(std::size_t pieces) {
        static const char* const alphabet[] = {"a", "Z", " ", "\n", "\t", "\"", "\\", "é", "ß", "Ω",
                                               "日", "本", "😀", "/", "{", "}", "%", "$", "0", "9"};
        std::string s;
        for (std::size_t i = 0; i < pieces; ++i) s += alphabet[below(std::size(alphabet))];
        if (s.find_first_not_of(" \n\t") == std::string::npos) s += "x";
        return s;
    }

    telekit::Document document(telekit::Category c, std::uint64_t index) {
        using namespace telekit;
        Document d;
        d.id = DocId{c, index};
        d.content = unicode_text(range(1, 80));
        switch (c) {
            case Category::arxiv: d.metadata = ArxivMeta{"2401." + std::to_string(10000 + index), sentence(), sentence()}; break;
            case Category::standard:
                d.metadata = StandardMeta{static_cast<std::int64_t>(range(21, 38)), static_cast<std::int64_t>(range(8, 18)),
                                          std::to_string(range(21000, 38999)) + "-c00"};
                break;
            case Category::wiki: d.metadata = WikiMeta{sentence(1, 4), "https://en.wikipedia.org/wiki/" + word()}; break;
            case Category::web: d.metadata = WebMeta{"https://" + word() + ".example/" + word()}; break;
        }
        return d;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

inline std::shared_ptr<telekit::gateway::Endpoint> scripted(telekit::gateway::Capability cap,
                                                            telekit::gateway::ScriptedTransport::Handler h,
                                                            std::shared_ptr<telekit::gateway::Transcript> t = nullptr,
                                                            int max_in_flight = 4) {
    telekit::gateway::EndpointConfig c;
    c.base_url = "mock:";
    c.capability = cap;
    c.model_name = "scripted";
    c.retries = 0;
    c.backoff_base_ms = 0;
    c.max_in_flight = max_in_flight;
    return std::make_shared<telekit::gateway::Endpoint>(
        c, std::make_unique<telekit::gateway::ScriptedTransport>(std::move(h)), std::move(t));
}

inline std::shared_ptr<telekit::gateway::Endpoint> mock(telekit::gateway::Capability cap,
                                                        const nlohmann::json& options = nlohmann::json::object(),
                                                        std::shared_ptr<telekit::gateway::Transcript> t = nullptr) {
    telekit::gateway::EndpointConfig c;
    c.base_url = "mock:";
    c.capability = cap;
    c.model_name = "mock-" + std::string(telekit::gateway::to_string(cap));
    c.options = options;
    c.backoff_base_ms = 0;
    return telekit::gateway::Endpoint::create(c, std::move(t));
}

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace tk_test
