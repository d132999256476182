#pragma once

// Little-endian byte buffers with a trailing CRC32, shared by the checkpoint
// and dataset file formats.

#include <zlib.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace tlab::binio {

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = ::crc32(crc, bytes.data() + off, n);
        off += n;
    }
    return static_cast<std::uint32_t>(crc);
}

class Writer {
public:
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void magic(const char (&m)[5]) { bytes({reinterpret_cast<const std::uint8_t*>(m), 4}); }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    // Appends the CRC32 of everything written so far and returns the buffer.
    std::vector<std::uint8_t> finish() && {
        u32(crc32(buf_));
        return std::move(buf_);
    }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    // Verifies the trailing CRC before any field is read.
    explicit Reader(std::span<const std::uint8_t> file) {
        if (file.size() < 4) throw FormatError("file too short for CRC32 trailer", file.size());
        body_ = file.first(file.size() - 4);
        std::uint32_t stored = 0;
        for (int i = 0; i < 4; ++i) stored |= std::uint32_t(file[body_.size() + i]) << (8 * i);
        expected_crc_ = stored;
    }

    void check_magic(const char (&m)[5]) {
        need(4, "magic");
        if (std::memcmp(body_.data() + pos_, m, 4) != 0) {
            std::string got;
            for (int i = 0; i < 4; ++i) {
                const auto c = static_cast<char>(body_[pos_ + i]);
                got += (c >= 32 && c < 127) ? c : '?';
            }
            throw FormatError("bad magic bytes '" + got + "', expected '" + std::string(m, 4) + "'", pos_);
        }
        pos_ += 4;
        // Magic is checked first so a foreign file reports the magic, not the CRC.
        const auto actual = crc32(body_);
        if (actual != expected_crc_) throw FormatError("CRC32 mismatch", body_.size());
    }

    std::uint8_t u8() {
        need(1, "u8");
        return body_[pos_++];
    }
    std::uint32_t u32() {
        need(4, "u32");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(body_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n, "byte block");
        auto s = body_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return body_.size() - pos_; }

    void expect_end() const {
        if (pos_ != body_.size()) throw FormatError("trailing bytes before CRC32", pos_);
    }

private:
    void need(std::size_t n, const char* what) const {
        if (body_.size() - pos_ < n) throw FormatError(std::string("truncated file reading ") + what, pos_);
    }

    std::span<const std::uint8_t> body_;
    std::uint32_t expected_crc_ = 0;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + path + "'");
}

} // namespace tlab::binio
