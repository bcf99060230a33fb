#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "jdna/core/error.hpp"
#include "jdna/core/param_set.hpp"

namespace jdna::prune {

enum class PatternKind : std::uint8_t {
    unstructured_global = 0,
    unstructured_layerwise = 1,
    unstructured_rowwise = 2,
    nm = 3,
};

inline const char* to_string(PatternKind k) {
    switch (k) {
        case PatternKind::unstructured_global: return "unstructured_global";
        case PatternKind::unstructured_layerwise: return "unstructured_layerwise";
        case PatternKind::unstructured_rowwise: return "unstructured_rowwise";
        case PatternKind::nm: return "nm";
    }
    return "?";
}

struct Pattern {
    PatternKind kind = PatternKind::unstructured_global;
    int n = 0;  // nm only
    int m = 0;  // nm only

    friend bool operator==(const Pattern&, const Pattern&) = default;
};

struct MaskEntry {
    std::string name;
    Shape shape;
    std::vector<std::uint8_t> keep;  // 1 = keep, 0 = pruned; row-major like the tensor

    std::size_t zeros() const {
        std::size_t z = 0;
        for (auto k : keep) z += (k == 0);
        return z;
    }
    std::size_t kept() const { return keep.size() - zeros(); }

    friend bool operator==(const MaskEntry&, const MaskEntry&) = default;
};

// Keep/drop pattern over the prunable tensors of a ParamSet, in ParamSet order.
struct PruneMask {
    Pattern pattern;
    double target_sparsity = 0.0;
    std::vector<MaskEntry> entries;

    const MaskEntry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.keep.size();
        return n;
    }
    std::size_t zeros() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.zeros();
        return n;
    }
    double sparsity() const { return total() ? double(zeros()) / double(total()) : 0.0; }

    friend bool operator==(const PruneMask&, const PruneMask&) = default;
};

// Mask keeping every prunable weight of `params`.
inline PruneMask all_ones_mask(const ParamSet& params) {
    PruneMask m;
    m.pattern.kind = PatternKind::unstructured_global;
    for (const auto& e : params)
        if (e.prunable) m.entries.push_back({e.name, e.value.shape(), std::vector<std::uint8_t>(e.value.size(), 1)});
    return m;
}

// Throws AlignmentError unless the mask covers exactly the prunable tensors of `params`,
// in order and with matching shapes.
inline void check_aligned(const ParamSet& params, const PruneMask& mask) {
    std::size_t i = 0;
    for (const auto& e : params) {
        if (!e.prunable) continue;
        if (i >= mask.entries.size())
            throw AlignmentError("mask has no entry for prunable tensor '" + e.name + "'");
        const auto& m = mask.entries[i];
        if (m.name != e.name)
            throw AlignmentError("mask entry '" + m.name + "' does not match tensor '" + e.name + "'");
        if (m.shape != e.value.shape() || m.keep.size() != e.value.size())
            throw AlignmentError("mask shape " + shape_str(m.shape) + " does not match '" + e.name + "' " +
                                 shape_str(e.value.shape()));
        ++i;
    }
    if (i != mask.entries.size())
        throw AlignmentError("mask has " + std::to_string(mask.entries.size() - i) + " entries without a prunable tensor");
}

}  // namespace jdna::prune
