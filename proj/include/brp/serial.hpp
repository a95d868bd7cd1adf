#pragma once

#include "brp/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

// Little-endian byte-level serialization. All on-disk formats in this
// library pin their numeric encoding to LE regardless of host order.

namespace brp::serial {

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(const void* p, std::size_t n) {
        const char* c = static_cast<const char*>(p);
        bytes_.insert(bytes_.end(), c, c + n);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    [[nodiscard]] const std::vector<char>& bytes() const noexcept { return bytes_; }

    void to_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error(io_error::kind::open_failed, "cannot open for write: " + path);
        out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
        if (!out) throw io_error(io_error::kind::open_failed, "write failed: " + path);
    }

private:
    std::vector<char> bytes_;
};

class Reader {
public:
    explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    static Reader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw io_error(io_error::kind::open_failed, "cannot open for read: " + path);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        return Reader(std::move(bytes));
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, bytes_.data() + pos_, n);
        pos_ += n;
    }

    [[nodiscard]] bool exhausted() const noexcept { return pos_ == bytes_.size(); }
    [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size())
            throw io_error(io_error::kind::truncated,
                           "truncated payload: need " + std::to_string(n) + " bytes at offset " +
                               std::to_string(pos_) + ", have " + std::to_string(bytes_.size() - pos_));
    }

    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

inline void write_magic(Writer& w, const char (&magic)[5]) { w.raw(magic, 4); }

inline void expect_magic(Reader& r, const char (&magic)[5], const std::string& what) {
    char got[4];
    try {
        r.raw(got, 4);
    } catch (const io_error&) {
        throw io_error(io_error::kind::malformed, what + ": file too short for header");
    }
    if (std::memcmp(got, magic, 4) != 0)
        throw io_error(io_error::kind::bad_magic, what + ": bad magic bytes");
}

} // namespace brp::serial
