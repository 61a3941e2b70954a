#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "ggsa/error.hpp"

namespace ggsa::io {

// Little-endian byte-buffer writer; the whole payload is assembled in memory
// so a trailing CRC32 can cover every preceding byte.
class ByteWriter {
public:
    void raw(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    std::uint32_t crc() const {
        return static_cast<std::uint32_t>(
            ::crc32(0L, buf_.data(), static_cast<uInt>(buf_.size())));
    }

    // Appends the CRC of everything written so far, then writes to disk.
    void finish_to_file(const std::string& path) {
        u32(crc());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::Filesystem, "cannot open " + path + " for writing");
        out.write(reinterpret_cast<const char*>(buf_.data()),
                  static_cast<std::streamsize>(buf_.size()));
        if (!out) fail(ErrorKind::Filesystem, "short write to " + path);
    }

    const std::vector<unsigned char>& bytes() const { return buf_; }

private:
    std::vector<unsigned char> buf_;
};

class ByteReader {
public:
    ByteReader(std::vector<unsigned char> bytes, std::string name)
        : buf_(std::move(bytes)), name_(std::move(name)), limit_(buf_.size()) {}

    static ByteReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail(ErrorKind::Filesystem, "cannot open " + path);
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
        return ByteReader(std::move(bytes), path);
    }

    // Validates the trailing CRC32 over all preceding bytes and removes it
    // from the readable range.
    void check_crc() {
        if (buf_.size() < 4) fail(ErrorKind::Format, name_ + ": truncated before checksum");
        const std::size_t body = buf_.size() - 4;
        std::uint32_t stored = 0;
        for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf_[body + i]) << (8 * i);
        const auto computed =
            static_cast<std::uint32_t>(::crc32(0L, buf_.data(), static_cast<uInt>(body)));
        if (stored != computed) fail(ErrorKind::Format, name_ + ": checksum mismatch");
        limit_ = body;
    }

    void need(std::size_t n) const {
        if (pos_ + n > limit_) fail(ErrorKind::Format, name_ + ": truncated at offset " +
                                                           std::to_string(pos_));
    }
    std::uint8_t u8() {
        need(1);
        return buf_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, buf_.data() + pos_, n);
        pos_ += n;
    }

    std::size_t offset() const { return pos_; }
    bool exhausted() const { return pos_ == limit_; }
    const std::string& name() const { return name_; }

private:
    std::vector<unsigned char> buf_;
    std::string name_;
    std::size_t pos_ = 0;
    std::size_t limit_;
};

} // namespace ggsa::io
