#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

namespace pertkit::binio {

// Little-endian primitives shared by all binary artifact formats.

inline void write_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes, 4);
}

inline void write_f64(std::ostream& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out.write(bytes, 8);
}

inline std::uint8_t read_u8(std::istream& in, const std::string& what) {
    int c = in.get();
    if (c == EOF) throw std::runtime_error("truncated file while reading " + what);
    return static_cast<std::uint8_t>(c);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
    char bytes[4];
    if (!in.read(bytes, 4)) throw std::runtime_error("truncated file while reading " + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    return v;
}

inline double read_f64(std::istream& in, const std::string& what) {
    char bytes[8];
    if (!in.read(bytes, 8)) throw std::runtime_error("truncated file while reading " + what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    return std::bit_cast<double>(bits);
}

inline void write_magic(std::ostream& out, const char (&magic)[5]) {
    out.write(magic, 4);
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
    char got[4];
    if (!in.read(got, 4)) throw std::runtime_error("truncated file while reading " + what + " magic");
    for (int i = 0; i < 4; ++i) {
        if (got[i] != magic[i]) {
            throw std::runtime_error("bad magic for " + what + " (expected " + std::string(magic, 4) +
                                     ", got " + std::string(got, 4) + ")");
        }
    }
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    return out;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    return in;
}

// Fails if the stream holds unread bytes; keeps fixed-layout files honest.
inline void expect_eof(std::istream& in, const std::string& what) {
    if (in.peek() != EOF) throw std::runtime_error("trailing bytes after " + what);
}

}  // namespace pertkit::binio
