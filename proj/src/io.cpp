#include "telekit/io.hpp"

#include <cstdio>
#include <cstring>
#include <vector>

#include <zlib.h>

#include "telekit/error.hpp"

namespace telekit::io {

namespace {

[[noreturn]] void fail(const std::string& what, const std::filesystem::path& path) {
    throw Error(ErrorCode::io_failure, what + ": " + path.string());
}

}  // namespace

bool has_gzip_extension(const std::filesystem::path& path) {
    return path.extension() == ".gz";
}

struct LineReader::Impl {
    gzFile file = nullptr;
    std::filesystem::path path;
    std::vector<char> buffer = std::vector<char>(1 << 16);
    std::uint64_t offset = 0;
};

LineReader::LineReader(const std::filesystem::path& path) : impl_(std::make_unique<Impl>()) {
    impl_->path = path;
    impl_->file = gzopen(path.c_str(), "rb");
    if (impl_->file == nullptr) fail("cannot open for reading", path);
    gzbuffer(impl_->file, 1 << 17);
}

LineReader::~LineReader() {
    if (impl_ && impl_->file != nullptr) gzclose(impl_->file);
}

bool LineReader::next(std::string& line) {
    line.clear();
    bool got_any = false;
    line_offset_ = impl_->offset;
    for (;;) {
        char* r = gzgets(impl_->file, impl_->buffer.data(), static_cast<int>(impl_->buffer.size()));
        if (r == nullptr) {
            int err = 0;
            gzerror(impl_->file, &err);
            if (err != Z_OK && err != Z_STREAM_END) fail("read error", impl_->path);
            break;
        }
        got_any = true;
        const std::size_t n = std::strlen(r);
        impl_->offset += n;
        line.append(r, n);
        if (n > 0 && r[n - 1] == '\n') break;
    }
    if (!got_any) return false;
    if (!line.empty() && line.back() == '\n') line.pop_back();
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_number_;
    return true;
}

struct LineWriter::Impl {
    std::filesystem::path path;
    gzFile gz = nullptr;
    std::FILE* plain = nullptr;
};

LineWriter::LineWriter(const std::filesystem::path& path) : impl_(std::make_unique<Impl>()) {
    impl_->path = path;
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    if (has_gzip_extension(path)) {
        impl_->gz = gzopen(path.c_str(), "wb");
        if (impl_->gz == nullptr) fail("cannot open for writing", path);
    } else {
        impl_->plain = std::fopen(path.c_str(), "wb");
        if (impl_->plain == nullptr) fail("cannot open for writing", path);
    }
}

LineWriter::~LineWriter() {
    try {
        close();
    } catch (...) {
    }
}

void LineWriter::write(std::string_view data) {
    if (data.empty()) return;
    if (impl_->gz != nullptr) {
        if (gzwrite(impl_->gz, data.data(), static_cast<unsigned>(data.size())) !=
            static_cast<int>(data.size())) {
            fail("write error", impl_->path);
        }
    } else if (impl_->plain != nullptr) {
        if (std::fwrite(data.data(), 1, data.size(), impl_->plain) != data.size()) {
            fail("write error", impl_->path);
        }
    } else {
        fail("write after close", impl_->path);
    }
}

void LineWriter::write_line(std::string_view line) {
    write(line);
    write("\n");
}

void LineWriter::close() {
    if (impl_->gz != nullptr) {
        const int rc = gzclose(impl_->gz);
        impl_->gz = nullptr;
        if (rc != Z_OK) fail("close error", impl_->path);
    }
    if (impl_->plain != nullptr) {
        const int rc = std::fclose(impl_->plain);
        impl_->plain = nullptr;
        if (rc != 0) fail("close error", impl_->path);
    }
}

std::string read_file(const std::filesystem::path& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) fail("cannot open for reading", path);
    std::string out;
    std::vector<char> buf(1 << 16);
    for (;;) {
        const int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
        if (n < 0) {
            gzclose(f);
            fail("read error", path);
        }
        if (n == 0) break;
        out.append(buf.data(), static_cast<std::size_t>(n));
    }
    gzclose(f);
    return out;
}

void write_file(const std::filesystem::path& path, std::string_view data) {
    LineWriter w(path);
    w.write(data);
    w.close();
}

}  // namespace telekit::io
