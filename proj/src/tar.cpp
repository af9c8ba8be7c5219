#include <cstdint>
#include <string>

#include "telekit/error.hpp"
#include "telekit/io.hpp"
#include "telekit/latex.hpp"

namespace telekit::latex {

namespace {

constexpr std::size_t kBlock = 512;

std::string field(std::string_view block, std::size_t off, std::size_t len) {
    auto f = block.substr(off, len);
    const auto nul = f.find('\0');
    return std::string(nul == std::string_view::npos ? f : f.substr(0, nul));
}

std::uint64_t parse_size(std::string_view block) {
    const auto raw = block.substr(124, 12);
    if (static_cast<unsigned char>(raw[0]) & 0x80) {  // GNU base-256
        std::uint64_t v = 0;
        for (std::size_t i = 1; i < raw.size(); ++i) v = (v << 8) | static_cast<unsigned char>(raw[i]);
        return v;
    }
    std::uint64_t v = 0;
    for (char c : raw) {
        if (c == ' ' || c == '\0') {
            if (v) break;
            continue;
        }
        if (c < '0' || c > '7') throw Error(ErrorCode::io_failure, "tar: bad size field");
        v = v * 8 + static_cast<std::uint64_t>(c - '0');
    }
    return v;
}

std::string pax_path(std::string_view data) {
    std::size_t i = 0;
    std::string path;
    while (i < data.size()) {
        const auto space = data.find(' ', i);
        if (space == std::string_view::npos) break;
        const auto len = std::stoull(std::string(data.substr(i, space - i)));
        if (len == 0 || i + len > data.size()) break;
        auto rec = data.substr(space + 1, len - (space - i) - 2);
        if (rec.starts_with("path=")) path = std::string(rec.substr(5));
        i += len;
    }
    return path;
}

}  // namespace

std::map<std::string, std::string> read_tar(const std::filesystem::path& archive) {
    const std::string data = io::read_file(archive);
    std::map<std::string, std::string> files;
    std::string long_name;
    std::size_t pos = 0;
    while (pos + kBlock <= data.size()) {
        const std::string_view block(data.data() + pos, kBlock);
        if (block.find_first_not_of('\0') == std::string_view::npos) break;
        const auto size = parse_size(block);
        const char type = block[156];
        const std::size_t body = pos + kBlock;
        if (body + size > data.size()) {
            throw Error(ErrorCode::io_failure, "tar: truncated archive " + archive.string());
        }
        const std::string_view content(data.data() + body, size);
        std::string name = field(block, 0, 100);
        if (block.substr(257, 5) == "ustar") {
            const auto prefix = field(block, 345, 155);
            if (!prefix.empty()) name = prefix + "/" + name;
        }
        if (!long_name.empty()) {
            name = long_name;
            long_name.clear();
        }
        if (type == 'L') {
            long_name = field(content, 0, content.size());
        } else if (type == 'x') {
            long_name = pax_path(content);
        } else if (type == '0' || type == '\0' || type == '7') {
            files[name] = std::string(content);
        }
        pos = body + (size + kBlock - 1) / kBlock * kBlock;
    }
    return files;
}

}  // namespace telekit::latex
