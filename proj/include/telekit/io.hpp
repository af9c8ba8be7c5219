#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace telekit::io {

// Line-oriented reader. Gzip input is decompressed transparently; plain files
// are read as-is (zlib passes them through). Lines are returned without the
// trailing '\n' (and without '\r' before it).
class LineReader {
public:
    explicit LineReader(const std::filesystem::path& path);
    ~LineReader();
    LineReader(const LineReader&) = delete;
    LineReader& operator=(const LineReader&) = delete;

    bool next(std::string& line);
    std::size_t line_number() const noexcept { return line_number_; }
    // Byte offset in the decompressed stream where the last returned line began.
    std::uint64_t line_offset() const noexcept { return line_offset_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::size_t line_number_ = 0;
    std::uint64_t line_offset_ = 0;
};

// Line writer; a ".gz" extension selects gzip output.
class LineWriter {
public:
    explicit LineWriter(const std::filesystem::path& path);
    ~LineWriter();
    LineWriter(const LineWriter&) = delete;
    LineWriter& operator=(const LineWriter&) = delete;

    void write(std::string_view data);
    void write_line(std::string_view line);
    void close();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);
bool has_gzip_extension(const std::filesystem::path& path);

}  // namespace telekit::io
