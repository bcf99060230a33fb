#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "jdna/core/error.hpp"
#include "jdna/core/tensor.hpp"

namespace jdna {

struct ParamEntry {
    std::string name;
    Tensor value;
    bool prunable = false;

    friend bool operator==(const ParamEntry&, const ParamEntry&) = default;
};

// Ordered, uniquely named collection of tensors. Iteration order is insertion order;
// for model parameters that is the order produced by model::init_params.
class ParamSet {
public:
    ParamSet() = default;

    void add(std::string name, Tensor value, bool prunable = false) {
        if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'", name);
        entries_.push_back({std::move(name), std::move(value), prunable});
    }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    auto begin() noexcept { return entries_.begin(); }
    auto end() noexcept { return entries_.end(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    ParamEntry& entry(std::size_t i) { return entries_.at(i); }
    const ParamEntry& entry(std::size_t i) const { return entries_.at(i); }

    const ParamEntry* find(const std::string& name) const {
        auto it = std::find_if(entries_.begin(), entries_.end(), [&](const ParamEntry& e) { return e.name == name; });
        return it == entries_.end() ? nullptr : &*it;
    }
    ParamEntry* find(const std::string& name) {
        auto it = std::find_if(entries_.begin(), entries_.end(), [&](const ParamEntry& e) { return e.name == name; });
        return it == entries_.end() ? nullptr : &*it;
    }

    Tensor& at(const std::string& name) {
        if (auto* e = find(name)) return e->value;
        throw AlignmentError("no parameter named '" + name + "'");
    }
    const Tensor& at(const std::string& name) const {
        if (auto* e = find(name)) return e->value;
        throw AlignmentError("no parameter named '" + name + "'");
    }

    void remove(const std::string& name) {
        std::erase_if(entries_, [&](const ParamEntry& e) { return e.name == name; });
    }

    std::size_t prunable_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_)
            if (e.prunable) n += e.value.size();
        return n;
    }

    // Same names, order, flags and shapes.
    bool same_layout(const ParamSet& other) const {
        if (size() != other.size()) return false;
        for (std::size_t i = 0; i < size(); ++i) {
            const auto& a = entries_[i];
            const auto& b = other.entries_[i];
            if (a.name != b.name || a.prunable != b.prunable || a.value.shape() != b.value.shape()) return false;
        }
        return true;
    }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;

private:
    std::vector<ParamEntry> entries_;
};

// Gradients share the ParamSet keying.
using GradSet = ParamSet;

inline ParamSet zeros_like(const ParamSet& p) {
    ParamSet out;
    for (const auto& e : p) out.add(e.name, Tensor(e.value.shape()), e.prunable);
    return out;
}

}  // namespace jdna
