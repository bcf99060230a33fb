#pragma once

#include "jdna/core/rng.hpp"
#include "jdna/prune/scores.hpp"
#include "jdna/task/tasks.hpp"

namespace jdna::prune {

inline constexpr int kCalibrationBatches = 8;
inline constexpr int kCalibrationBatchSize = 32;

// Masked-token batches drawn from the pre-training corpus; deterministic in `seed`.
inline CalibrationSet make_calibration_set(const task::PretrainCorpus& corpus, std::uint64_t seed,
                                           int n_batches = kCalibrationBatches,
                                           int batch_size = kCalibrationBatchSize) {
    Rng rng(derive_seed(seed, task::stream_calibration));
    CalibrationSet c;
    for (int i = 0; i < n_batches; ++i) c.batches.push_back(task::mlm_batch(corpus, batch_size, rng));
    return c;
}

}  // namespace jdna::prune
