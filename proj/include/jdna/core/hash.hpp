#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

namespace jdna {

// 64-bit FNV-1a.
class Fnv1a {
public:
    Fnv1a& update(std::span<const unsigned char> bytes) {
        for (unsigned char b : bytes) {
            h_ ^= b;
            h_ *= 0x100000001B3ULL;
        }
        return *this;
    }
    Fnv1a& update(std::string_view s) {
        return update(std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
    }
    std::uint64_t digest() const noexcept { return h_; }
    std::string hex() const { return to_hex(h_); }

    static std::string to_hex(std::uint64_t v) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
        return buf;
    }

private:
    std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

inline std::string hash_hex(std::string_view s) { return Fnv1a{}.update(s).hex(); }

}  // namespace jdna
