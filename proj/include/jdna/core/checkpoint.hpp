#pragma once

// Checkpoint file layout (version 1, all integers and floats little-endian):
//
//   magic     8 bytes   "JDNACKPT"
//   version   u32       1
//   count     u32       number of tensors
//   per tensor, in ParamSet order:
//     name_len  u32
//     name      name_len bytes (UTF-8)
//     flags     u8        bit 0 = prunable
//     rank      u32
//     dims      rank x u64
//     values    product(dims) x f64 (IEEE-754 binary64)

#include <filesystem>
#include <string>

#include "jdna/core/binary_io.hpp"
#include "jdna/core/param_set.hpp"

namespace jdna {

inline constexpr std::string_view kCheckpointMagic = "JDNACKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string encode_checkpoint(const ParamSet& params) {
    io::ByteWriter w;
    w.bytes(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& e : params) {
        w.u32(static_cast<std::uint32_t>(e.name.size()));
        w.bytes(e.name);
        w.u8(e.prunable ? 1 : 0);
        w.u32(static_cast<std::uint32_t>(e.value.rank()));
        for (auto d : e.value.shape()) w.u64(d);
        for (double v : e.value.data()) w.f64(v);
    }
    return w.buffer();
}

inline ParamSet decode_checkpoint(std::string_view bytes) {
    io::ByteReader r(bytes);
    if (r.bytes(kCheckpointMagic.size(), "magic") != kCheckpointMagic) throw FormatError("bad checkpoint magic", 0);
    const auto version_at = r.offset();
    if (auto v = r.u32("version"); v != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(v), version_at);
    const std::uint32_t count = r.u32("tensor count");
    ParamSet params;
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = r.u32("name length");
        const auto name_at = r.offset();
        std::string name(r.bytes(name_len, "name"));
        const auto flags_at = r.offset();
        const auto flags = r.u8("flags");
        if (flags > 1) throw FormatError("unknown tensor flags", flags_at);
        const auto rank_at = r.offset();
        const auto rank = r.u32("rank");
        if (rank == 0 || rank > 8) throw FormatError("invalid tensor rank " + std::to_string(rank), rank_at);
        Shape shape;
        std::uint64_t total = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const auto dim_at = r.offset();
            const auto d = r.u64("dimension");
            if (d == 0 || d > (std::uint64_t{1} << 32)) throw FormatError("invalid dimension", dim_at);
            total *= d;
            if (total > (std::uint64_t{1} << 34)) throw FormatError("tensor too large", dim_at);
            shape.push_back(static_cast<std::size_t>(d));
        }
        r.need(static_cast<std::size_t>(total) * 8, "tensor values");
        std::vector<double> data(static_cast<std::size_t>(total));
        for (auto& v : data) v = r.f64("tensor values");
        if (params.find(name)) throw FormatError("duplicate tensor name '" + name + "'", name_at);
        params.add(std::move(name), Tensor(std::move(shape), std::move(data)), flags & 1);
    }
    if (!r.at_end()) throw FormatError("trailing bytes after last tensor", r.offset());
    return params;
}

inline void save_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
    io::write_file(path, encode_checkpoint(params));
}

inline ParamSet load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(io::read_file(path));
}

}  // namespace jdna
