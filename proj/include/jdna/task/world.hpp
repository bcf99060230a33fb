#pragma once

// The hidden structure shared by pre-training and every downstream task: per-word attributes,
// a (subject, relation) -> object fact table, and two substitution+permutation "translation"
// rules. Everything is a pure function of the world seed.

#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include "jdna/core/rng.hpp"

namespace jdna::task {

// Token layout of the shared 256-entry vocabulary.
namespace tok {
inline constexpr int pad = 0;
inline constexpr int cls = 1;
inline constexpr int mask = 2;
inline constexpr int sep = 3;
inline constexpr int query = 4;
inline constexpr int domain_tag = 5;  // + domain index (0 = majority, 1 = minority)
inline constexpr int attr = 8;        // attr + 2 * feature + value, feature in [0, 3)
inline constexpr int word = 16;       // 64 words
inline constexpr int subject = 80;    // 64 subjects
inline constexpr int relation = 144;  // 16 relations
inline constexpr int object = 160;    // 32 objects
inline constexpr int alphabet = 192;  // 4 alphabets of 16: (domain, side) -> alphabet + 16 * (2 * domain + side)
inline constexpr int vocab_size = 256;

inline bool is_special(int t) { return t < attr; }
}  // namespace tok

inline constexpr int kWords = 64;
inline constexpr int kFeatures = 3;
inline constexpr int kSubjects = 64;
inline constexpr int kRelations = 16;
inline constexpr int kObjects = 32;
inline constexpr int kLatentSymbols = 16;
inline constexpr int kLatentLength = 6;
inline constexpr int kDomains = 2;

enum class Domain { majority = 0, minority = 1 };

inline const char* to_string(Domain d) { return d == Domain::majority ? "majority" : "minority"; }

struct TranslationRule {
    std::array<int, kLatentSymbols> source_sub{};  // latent symbol -> source alphabet index
    std::array<int, kLatentSymbols> target_sub{};  // latent symbol -> target alphabet index
    std::array<int, kLatentLength> order{};        // target position i carries latent[order[i]]
};

// RNG stream ids for world-derived generators.
enum Stream : std::uint64_t {
    stream_attributes = 1,
    stream_facts,
    stream_rules,
    stream_subsample_corpus,
    stream_subsample_eval,
    stream_multidomain,
    stream_contextqa,
    stream_pretrain_corpus,
    stream_calibration,
};

struct World {
    std::uint64_t seed = 0;
    std::array<std::array<int, kFeatures>, kWords> word_attrs{};
    std::array<std::array<int, kRelations>, kSubjects> facts{};
    std::array<TranslationRule, kDomains> rules{};

    static World generate(std::uint64_t seed) {
        World w;
        w.seed = seed;
        Rng attr_rng(derive_seed(seed, stream_attributes));
        for (int f = 0; f < kFeatures; ++f) {
            // each feature is on for exactly half of the words
            std::vector<int> on(kWords, 0);
            std::fill(on.begin(), on.begin() + kWords / 2, 1);
            attr_rng.shuffle(on);
            for (int i = 0; i < kWords; ++i) w.word_attrs[i][f] = on[i];
        }
        Rng fact_rng(derive_seed(seed, stream_facts));
        for (auto& row : w.facts)
            for (auto& o : row) o = int(fact_rng.below(kObjects));
        Rng rule_rng(derive_seed(seed, stream_rules));
        for (auto& r : w.rules) {
            std::iota(r.source_sub.begin(), r.source_sub.end(), 0);
            std::iota(r.target_sub.begin(), r.target_sub.end(), 0);
            std::iota(r.order.begin(), r.order.end(), 0);
            rule_rng.shuffle(r.source_sub);
            rule_rng.shuffle(r.target_sub);
            rule_rng.shuffle(r.order);
        }
        return w;
    }

    int attribute(int word_index, int feature) const { return word_attrs[word_index][feature]; }

    static int alphabet_token(Domain d, int side, int index) {
        return tok::alphabet + 16 * (2 * int(d) + side) + index;
    }

    std::array<int, kLatentLength> render_source(Domain d, const std::array<int, kLatentLength>& latent) const {
        std::array<int, kLatentLength> out{};
        const auto& r = rules[int(d)];
        for (int i = 0; i < kLatentLength; ++i) out[i] = alphabet_token(d, 0, r.source_sub[latent[i]]);
        return out;
    }

    std::array<int, kLatentLength> render_target(Domain d, const std::array<int, kLatentLength>& latent) const {
        std::array<int, kLatentLength> out{};
        const auto& r = rules[int(d)];
        for (int i = 0; i < kLatentLength; ++i) out[i] = alphabet_token(d, 1, r.target_sub[latent[r.order[i]]]);
        return out;
    }

    // Inverse of render_target; -1 entries for tokens outside the domain's target alphabet.
    std::array<int, kLatentLength> decode_target(Domain d, const std::array<int, kLatentLength>& target) const {
        std::array<int, kLatentLength> latent{};
        latent.fill(-1);
        const auto& r = rules[int(d)];
        for (int i = 0; i < kLatentLength; ++i) {
            const int idx = target[i] - alphabet_token(d, 1, 0);
            if (idx < 0 || idx >= kLatentSymbols) continue;
            for (int s = 0; s < kLatentSymbols; ++s)
                if (r.target_sub[s] == idx) latent[r.order[i]] = s;
        }
        return latent;
    }
};

}  // namespace jdna::task
