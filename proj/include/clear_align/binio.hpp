#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "errors.hpp"

namespace clear_align {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written by memcpy");

class BinaryWriter {
public:
    void magic(std::string_view m) { buf_.append(m.data(), m.size()); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void f64s(const double* p, std::size_t n) { raw(p, n * sizeof(double)); }
    void bytes(const void* p, std::size_t n) { raw(p, n); }
    void pad_to(std::size_t alignment) {
        while (buf_.size() % alignment) buf_.push_back('\0');
    }
    std::size_t size() const { return buf_.size(); }
    const std::string& str() const { return buf_; }

private:
    void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    std::string buf_;
};

// Reads from an in-memory image; running off the end raises a corruption
// error naming the offset where the missing data should have started.
class BinaryReader {
public:
    explicit BinaryReader(std::string data) : data_(std::move(data)) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    void expect_magic(std::string_view m, std::string_view what) {
        if (remaining() < m.size() || std::string_view(data_).substr(pos_, m.size()) != m)
            throw FormatError(std::string(what) + ": bad magic, expected \"" + std::string(m) + "\"");
        pos_ += m.size();
    }
    std::uint32_t u32(std::string_view what) {
        std::uint32_t v;
        take(&v, sizeof v, what);
        return v;
    }
    void f64s(double* out, std::size_t n, std::string_view what) { take(out, n * sizeof(double), what); }
    void bytes(void* out, std::size_t n, std::string_view what) { take(out, n, what); }
    void skip_to_alignment(std::size_t alignment, std::string_view what) {
        const std::size_t target = (pos_ + alignment - 1) / alignment * alignment;
        if (target > data_.size()) throw CorruptionError(std::string(what) + " truncated in padding", pos_);
        pos_ = target;
    }

private:
    void take(void* out, std::size_t n, std::string_view what) {
        if (remaining() < n)
            throw CorruptionError(std::string(what) + " truncated: need " + std::to_string(n) +
                                      " bytes, have " + std::to_string(remaining()),
                                  pos_);
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
    }

    std::string data_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PathError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Write to a sibling temp file and rename over the destination so readers
// never observe a half-written file.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path() && !fs::exists(path.parent_path()))
        throw PathError("directory does not exist: " + path.parent_path().string());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw PathError("cannot write " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) throw PathError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw PathError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

} // namespace clear_align
