#pragma once

// Mask file layout (version 1, little-endian):
//
//   magic     8 bytes  "JDNAMASK"
//   version   u32      1
//   pattern   u8       PatternKind
//   n, m      u32 x2   N:M parameters (0 for unstructured)
//   sparsity  f64      target sparsity
//   count     u32      number of entries, in checkpoint tensor order
//   per entry: name_len u32, name, rank u32, dims rank x u64,
//              keep bits: ceil(size / 8) bytes, bit i of byte k = weight 8k + i (1 = keep)

#include <filesystem>

#include "jdna/core/binary_io.hpp"
#include "jdna/prune/mask.hpp"

namespace jdna::prune {

inline constexpr std::string_view kMaskMagic = "JDNAMASK";
inline constexpr std::uint32_t kMaskVersion = 1;

inline std::string encode_mask(const PruneMask& mask) {
    io::ByteWriter w;
    w.bytes(kMaskMagic);
    w.u32(kMaskVersion);
    w.u8(static_cast<std::uint8_t>(mask.pattern.kind));
    w.u32(static_cast<std::uint32_t>(mask.pattern.n));
    w.u32(static_cast<std::uint32_t>(mask.pattern.m));
    w.f64(mask.target_sparsity);
    w.u32(static_cast<std::uint32_t>(mask.entries.size()));
    for (const auto& e : mask.entries) {
        w.u32(static_cast<std::uint32_t>(e.name.size()));
        w.bytes(e.name);
        w.u32(static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) w.u64(d);
        for (std::size_t i = 0; i < e.keep.size(); i += 8) {
            std::uint8_t byte = 0;
            for (std::size_t b = 0; b < 8 && i + b < e.keep.size(); ++b)
                if (e.keep[i + b]) byte |= std::uint8_t(1u << b);
            w.u8(byte);
        }
    }
    return w.buffer();
}

inline PruneMask decode_mask(std::string_view bytes) {
    io::ByteReader r(bytes);
    if (r.bytes(kMaskMagic.size(), "magic") != kMaskMagic) throw FormatError("bad mask magic", 0);
    const auto version_at = r.offset();
    if (r.u32("version") != kMaskVersion) throw FormatError("unsupported mask version", version_at);
    PruneMask mask;
    const auto kind_at = r.offset();
    const auto kind = r.u8("pattern");
    if (kind > static_cast<std::uint8_t>(PatternKind::nm)) throw FormatError("unknown pattern kind", kind_at);
    mask.pattern.kind = static_cast<PatternKind>(kind);
    mask.pattern.n = static_cast<int>(r.u32("n"));
    mask.pattern.m = static_cast<int>(r.u32("m"));
    mask.target_sparsity = r.f64("sparsity");
    const auto count = r.u32("entry count");
    for (std::uint32_t t = 0; t < count; ++t) {
        MaskEntry e;
        e.name = std::string(r.bytes(r.u32("name length"), "name"));
        const auto rank_at = r.offset();
        const auto rank = r.u32("rank");
        if (rank == 0 || rank > 8) throw FormatError("invalid rank", rank_at);
        std::uint64_t total = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const auto dim_at = r.offset();
            const auto d = r.u64("dimension");
            if (d == 0 || d > (std::uint64_t{1} << 32)) throw FormatError("invalid dimension", dim_at);
            total *= d;
            if (total > (std::uint64_t{1} << 34)) throw FormatError("entry too large", dim_at);
            e.shape.push_back(static_cast<std::size_t>(d));
        }
        const auto packed = r.bytes(static_cast<std::size_t>((total + 7) / 8), "keep bits");
        e.keep.resize(static_cast<std::size_t>(total));
        for (std::size_t i = 0; i < e.keep.size(); ++i)
            e.keep[i] = (static_cast<unsigned char>(packed[i / 8]) >> (i % 8)) & 1u;
        mask.entries.push_back(std::move(e));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after last mask entry", r.offset());
    return mask;
}

inline void save_mask(const PruneMask& mask, const std::filesystem::path& path) {
    io::write_file(path, encode_mask(mask));
}

inline PruneMask load_mask(const std::filesystem::path& path) { return decode_mask(io::read_file(path)); }

}  // namespace jdna::prune
