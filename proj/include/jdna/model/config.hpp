#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jdna/core/error.hpp"

namespace jdna::model {

enum class HeadKind { classification, token_prediction };

struct ModelConfig {
    int vocab_size = 256;
    int d_model = 64;
    int n_blocks = 2;
    int n_heads = 4;
    int ff_mult = 2;
    int max_seq_len = 32;
    HeadKind head = HeadKind::token_prediction;
    int num_classes = 0;  // classification only

    int d_head() const { return d_model / n_heads; }
    int d_ff() const { return d_model * ff_mult; }
    int output_size() const { return head == HeadKind::classification ? num_classes : vocab_size; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Every prunable dimension is a multiple of this, so N:M tiles with M in {4, 8}.
inline constexpr int kPruneGroupMultiple = 8;

inline void validate(const ModelConfig& c) {
    auto positive = [](int v, const char* key) {
        if (v <= 0) throw ConfigError(std::string(key) + " must be positive, got " + std::to_string(v), key);
    };
    positive(c.vocab_size, "vocab_size");
    positive(c.d_model, "d_model");
    positive(c.n_blocks, "n_blocks");
    positive(c.n_heads, "n_heads");
    positive(c.ff_mult, "ff_mult");
    positive(c.max_seq_len, "max_seq_len");
    if (c.d_model % c.n_heads != 0)
        throw ConfigError("d_model (" + std::to_string(c.d_model) + ") must be divisible by n_heads (" +
                              std::to_string(c.n_heads) + ")",
                          "d_model");
    if (c.d_model % kPruneGroupMultiple != 0)
        throw ConfigError("d_model must be a multiple of " + std::to_string(kPruneGroupMultiple), "d_model");
    if (c.d_ff() % kPruneGroupMultiple != 0)
        throw ConfigError("d_model * ff_mult must be a multiple of " + std::to_string(kPruneGroupMultiple), "ff_mult");
    if (c.head == HeadKind::classification && c.num_classes < 2)
        throw ConfigError("classification head needs num_classes >= 2", "num_classes");
}

inline constexpr int kIgnoreLabel = -1;

// token_ids and labels are row-major [batch x seq_len]. Classification batches carry one
// label per row; token-prediction batches carry one label per position (kIgnoreLabel = no target).
struct Batch {
    int batch_size = 0;
    int seq_len = 0;
    std::vector<int> token_ids;
    std::vector<int> lengths;  // valid (non-padding) prefix length of each row
    std::vector<int> labels;

    int token(int b, int t) const { return token_ids[std::size_t(b) * seq_len + t]; }
};

inline void validate(const ModelConfig& c, const Batch& batch) {
    if (batch.batch_size <= 0 || batch.seq_len <= 0) throw ValidationError("empty batch");
    if (batch.seq_len > c.max_seq_len)
        throw ValidationError("batch seq_len " + std::to_string(batch.seq_len) + " exceeds max_seq_len " +
                              std::to_string(c.max_seq_len));
    const auto cells = std::size_t(batch.batch_size) * batch.seq_len;
    if (batch.token_ids.size() != cells) throw ValidationError("token_ids size does not match batch shape");
    if (batch.lengths.size() != std::size_t(batch.batch_size)) throw ValidationError("lengths size mismatch");
    for (int len : batch.lengths)
        if (len < 1 || len > batch.seq_len) throw ValidationError("row length out of range");
    for (int t : batch.token_ids)
        if (t < 0 || t >= c.vocab_size) throw ValidationError("token id " + std::to_string(t) + " out of vocabulary");
    const auto expected = c.head == HeadKind::classification ? std::size_t(batch.batch_size) : cells;
    if (batch.labels.size() != expected) throw ValidationError("labels size does not match head kind");
    for (int l : batch.labels)
        if (l != kIgnoreLabel && (l < 0 || l >= c.output_size()))
            throw ValidationError("label " + std::to_string(l) + " out of range");
}

}  // namespace jdna::model
