#include <gtest/gtest.h>

#include <cmath>

#include "jdna/model/transformer.hpp"
#include "jdna/prune/builders.hpp"
#include "jdna/prune/calibration.hpp"
#include "jdna/prune/mask_io.hpp"
#include "jdna/prune/scores.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace jdna;
using namespace jdna::prune;
using namespace jdna::testing;

namespace {

ParamSet rows_of(std::initializer_list<std::pair<const char*, std::vector<double>>> layers) {
    ParamSet p;
    for (const auto& [name, values] : layers) p.add(name, Tensor({1, values.size()}, values), true);
    return p;
}

ParamSet reference_params(std::uint64_t seed = 0) {
    Rng rng(seed);
    return model::init_params(model::ModelConfig{}, rng);
}

// Gauss-Jordan inverse with partial pivoting.
std::vector<std::vector<double>> dense_inverse(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        std::swap(inv[c], inv[piv]);
        const double d = a[c][c];
        for (std::size_t j = 0; j < n; ++j) {
            a[c][j] /= d;
            inv[c][j] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = a[r][c];
            for (std::size_t j = 0; j < n; ++j) {
                a[r][j] -= f * a[c][j];
                inv[r][j] -= f * inv[c][j];
            }
        }
    }
    return inv;
}

model::ModelConfig lm_config() {
    auto c = tiny_config(model::HeadKind::token_prediction);
    c.max_seq_len = 32;
    return c;
}

task::PretrainCorpus small_corpus() {
    task::PretrainCorpusSpec spec;
    spec.majority_n = 200;
    spec.minority_n = 20;
    spec.definition_sequences = 100;
    spec.fact_sequences = 100;
    return task::pretrain_corpus(task::World::generate(7), spec);
}

// Every valid (non-padding) input row reaching each prunable layer, read from the forward cache.
std::map<std::string, std::vector<std::vector<double>>> materialize_inputs(const model::ModelConfig& cfg,
                                                                           const ParamSet& p,
                                                                           const CalibrationSet& calib) {
    std::map<std::string, std::vector<std::vector<double>>> out;
    for (const auto& b : calib.batches) {
        const auto c = model::forward_cached(cfg, p, b);
        for (int blk = 0; blk < cfg.n_blocks; ++blk) {
            const auto& bc = c.blocks[std::size_t(blk)];
            const std::pair<const char*, const Tensor*> layers[] = {{"attn.q.weight", &bc.h}, {"attn.k.weight", &bc.h},
                                                                    {"attn.v.weight", &bc.h}, {"attn.o.weight", &bc.ctx},
                                                                    {"ff1.weight", &bc.h2},   {"ff2.weight", &bc.g}};
            for (const auto& [suffix, x] : layers)
                for (int r = 0; r < b.batch_size; ++r)
                    for (int t = 0; t < b.lengths[std::size_t(r)]; ++t) {
                        const auto row = x->row(std::size_t(r * b.seq_len + t));
                        out[model::block_param(blk, suffix)].emplace_back(row.begin(), row.end());
                    }
        }
    }
    return out;
}

}  // namespace

TEST(Magnitude, AbsoluteValue) {
    const auto p = rows_of({{"w", {-0.7, 0.0, 0.3}}});
    const auto s = score_magnitude(p);
    EXPECT_EQ(s.at("w")[0], 0.7);
    EXPECT_EQ(s.at("w")[1], 0.0);
    EXPECT_EQ(s.at("w")[2], 0.3);
}

TEST(Magnitude, ZerosAndSignFlip) {
    auto p = reference_params();
    auto flipped = p;
    for (auto& e : flipped)
        for (auto& v : e.value.data()) v = -v;
    const auto a = score_magnitude(p);
    const auto b = score_magnitude(flipped);
    for (std::size_t i = 0; i < a.entries.size(); ++i) EXPECT_EQ(a.entries[i].second, b.entries[i].second);
    for (auto& e : p) e.value.fill(0.0);
    for (const auto& [n, t] : score_magnitude(p).entries)
        for (double v : t.data()) EXPECT_EQ(v, 0.0);
}

TEST(Magnitude, OnlyPrunableTensorsInOrder) {
    const auto p = reference_params();
    const auto s = score_magnitude(p);
    std::size_t i = 0;
    for (const auto& e : p)
        if (e.prunable) { EXPECT_EQ(s.entries[i++].first, e.name); }
    EXPECT_EQ(i, s.entries.size());
}

TEST(Wanda, LargerWeightCanScoreLower) {
    const auto t = wanda_scores(Tensor::matrix(1, 2, {{1.0, 0.1}}), std::vector<double>{0.01, 4.0});
    EXPECT_DOUBLE_EQ(t[0], 0.1);
    EXPECT_DOUBLE_EQ(t[1], 0.2);
    EXPECT_THROW(wanda_scores(Tensor({1, 2}), std::vector<double>{1.0}), DimensionError);
}

TEST(Wanda, ZeroActivationsGiveZeroScores) {
    Rng rng(1);
    const auto t = wanda_scores(random_tensor({4, 8}, rng), std::vector<double>(8, 0.0));
    for (double v : t.data()) EXPECT_EQ(v, 0.0);
}

TEST(Wanda, MatchesMaterializedInputs) {
    const auto cfg = lm_config();
    Rng rng(2);
    const auto p = model::init_params(cfg, rng);
    const auto calib = make_calibration_set(small_corpus(), 7, 2, 8);
    const auto got = score_wanda(p, cfg, calib);
    const auto inputs = materialize_inputs(cfg, p, calib);
    for (const auto& [name, t] : got.entries) {
        const auto& w = p.at(name);
        const auto& rows = inputs.at(name);
        for (std::size_t j = 0; j < w.cols(); ++j) {
            double sq = 0.0;
            for (const auto& r : rows) sq += r[j] * r[j];
            for (std::size_t i = 0; i < w.rows(); ++i) {
                const double want = std::abs(w.at(i, j)) * std::sqrt(sq);
                ASSERT_NEAR(t.at(i, j), want, 1e-12 * std::max(1.0, want)) << name;
            }
        }
    }
}

TEST(Wanda, FirstLayerInputIsTheLayerNormOfEmbeddings) {
    // Rebuild block0's attention input by hand: LN(token_embed + pos_embed) with unit gain, zero bias.
    const auto cfg = lm_config();
    Rng rng(3);
    const auto p = model::init_params(cfg, rng);
    const auto calib = make_calibration_set(small_corpus(), 7, 1, 4);
    const auto& b = calib.batches[0];
    std::vector<double> sq(std::size_t(cfg.d_model), 0.0);
    for (int r = 0; r < b.batch_size; ++r)
        for (int t = 0; t < b.lengths[std::size_t(r)]; ++t) {
            std::vector<double> x(std::size_t(cfg.d_model));
            double mean = 0.0;
            for (int j = 0; j < cfg.d_model; ++j) {
                x[std::size_t(j)] = p.at("embed.token.weight").at(std::size_t(b.token(r, t)), std::size_t(j)) +
                                    p.at("embed.pos.weight").at(std::size_t(t), std::size_t(j));
                mean += x[std::size_t(j)];
            }
            mean /= cfg.d_model;
            double var = 0.0;
            for (double v : x) var += (v - mean) * (v - mean);
            var /= cfg.d_model;
            for (int j = 0; j < cfg.d_model; ++j) {
                const double y = (x[std::size_t(j)] - mean) / std::sqrt(var + 1e-5);
                sq[std::size_t(j)] += y * y;
            }
        }
    const auto got = score_wanda(p, cfg, calib).at("block0.attn.q.weight");
    const auto want = wanda_scores(p.at("block0.attn.q.weight"), sq);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-10 * std::max(1.0, want[i]));
}

TEST(Wanda, EmptyCalibrationSet) {
    const auto cfg = lm_config();
    Rng rng(3);
    const auto p = model::init_params(cfg, rng);
    EXPECT_THROW(score_wanda(p, cfg, CalibrationSet{}), ValidationError);
    EXPECT_THROW(score_second_order(p, cfg, CalibrationSet{}), ValidationError);
}

TEST(SecondOrder, ThreeByThreeMatchesDenseInverse) {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const auto x = random_tensor({6, 3}, rng);
        const auto w = random_tensor({2, 3}, rng);
        const auto gram = matmul(transpose(x), x);
        const double lambda = 1e-2;
        const double mean_diag = (gram.at(0, 0) + gram.at(1, 1) + gram.at(2, 2)) / 3.0;
        std::vector<std::vector<double>> h(3, std::vector<double>(3));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) h[i][j] = gram.at(i, j) + (i == j ? lambda * mean_diag : 0.0);
        const auto inv = dense_inverse(h);
        const auto got = second_order_scores(w, gram, lambda);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                const double want = w.at(i, j) * w.at(i, j) / inv[j][j];
                EXPECT_NEAR(got.at(i, j), want, 1e-10 * want);
            }
    }
}

TEST(SecondOrder, IdentityHessianIsMagnitudeSquared) {
    Rng rng(5);
    const auto w = random_tensor({4, 8}, rng);
    const auto got = second_order_scores(w, identity(8), 1e-12);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(got[i], w[i] * w[i], 1e-11);
    ImportanceScores so{Criterion::second_order, {{"w", got}}};
    ParamSet p;
    p.add("w", w, true);
    EXPECT_EQ(build_mask_unstructured(so, 0.5, Scope::layerwise).entries,
              build_mask_unstructured(score_magnitude(p), 0.5, Scope::layerwise).entries);
}

TEST(SecondOrder, InputScalingScalesScoresByCSquared) {
    Rng rng(6);
    const auto x = random_tensor({20, 8}, rng);
    const auto w = random_tensor({3, 8}, rng);
    const auto gram = matmul(transpose(x), x);
    const double c = 3.0;
    Tensor scaled = gram;
    for (auto& v : scaled.data()) v *= c * c;
    const auto a = second_order_scores(w, gram, 1e-2);
    const auto b = second_order_scores(w, scaled, 1e-2);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], c * c * a[i], 1e-10 * c * c * a[i]);
}

TEST(SecondOrder, ModelScoresMatchExplicitGramInverse) {
    const auto cfg = lm_config();
    Rng rng(7);
    const auto p = model::init_params(cfg, rng);
    const auto calib = make_calibration_set(small_corpus(), 7, 2, 8);
    const auto got = score_second_order(p, cfg, calib, 1e-2);
    const auto inputs = materialize_inputs(cfg, p, calib);
    for (const char* name : {"block0.attn.o.weight", "block1.ff2.weight"}) {
        const auto& rows = inputs.at(name);
        const auto& w = p.at(name);
        const std::size_t n = w.cols();
        std::vector<std::vector<double>> h(n, std::vector<double>(n, 0.0));
        for (const auto& r : rows)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) h[i][j] += r[i] * r[j];
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += h[i][i];
        mean /= double(n);
        for (std::size_t i = 0; i < n; ++i) h[i][i] += 1e-2 * mean;
        const auto inv = dense_inverse(h);
        const auto& t = got.at(name);
        for (std::size_t i = 0; i < w.rows(); ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double want = w.at(i, j) * w.at(i, j) / inv[j][j];
                ASSERT_NEAR(t.at(i, j), want, 1e-8 * want + 1e-300) << name;
            }
    }
}

TEST(SecondOrder, SingularHessianAndBadDamping) {
    EXPECT_THROW(second_order_scores(Tensor({1, 2}, 1.0), Tensor({2, 2}), 1e-2), NumericError);
    EXPECT_THROW(second_order_scores(Tensor({1, 2}, 1.0), identity(2), 0.0), ValidationError);
}

TEST(Unstructured, SingleLayerExample) {
    const auto p = rows_of({{"w", {0.5, -0.1, 0.3, -0.7}}});
    const auto m = build_mask_unstructured(score_magnitude(p), 0.5, Scope::global);
    EXPECT_EQ(m.entries[0].keep, (std::vector<std::uint8_t>{1, 0, 0, 1}));
}

TEST(Unstructured, GlobalCollapsesLayerwiseDoesNot) {
    const auto p = rows_of({{"layer1", {1.0, 0.9}}, {"layer2", {0.3, 0.1}}});
    const auto s = score_magnitude(p);
    const auto g = build_mask_unstructured(s, 0.5, Scope::global);
    EXPECT_EQ(g.entries[0].keep, (std::vector<std::uint8_t>{1, 1}));
    EXPECT_EQ(g.entries[1].keep, (std::vector<std::uint8_t>{0, 0}));
    const auto l = build_mask_unstructured(s, 0.5, Scope::layerwise);
    EXPECT_EQ(l.entries[0].keep, (std::vector<std::uint8_t>{1, 0}));
    EXPECT_EQ(l.entries[1].keep, (std::vector<std::uint8_t>{1, 0}));
}

TEST(Unstructured, TiesBreakByNameThenIndex) {
    const auto p = rows_of({{"b", {1.0, 1.0}}, {"a", {1.0, 1.0}}});
    const auto m = build_mask_unstructured(score_magnitude(p), 0.75, Scope::global);
    EXPECT_EQ(m.entries[1].keep, (std::vector<std::uint8_t>{0, 0}));  // "a" first
    EXPECT_EQ(m.entries[0].keep, (std::vector<std::uint8_t>{0, 1}));
}

TEST(Unstructured, SparsityOutOfRange) {
    const auto s = score_magnitude(reference_params());
    EXPECT_THROW(build_mask_unstructured(s, 1.0), ValidationError);
    EXPECT_THROW(build_mask_unstructured(s, -0.1), ValidationError);
}

TEST(Unstructured, MatchesFullSortOracles) {
    Rng rng(1000);
    for (int trial = 0; trial < 1500; ++trial) {
        const auto sc = random_scores(rng);
        const double s = trial % 10 == 0 ? 0.0 : rng.uniform(0.0, 0.999);
        ASSERT_EQ(keep_sets(build_mask_unstructured(sc, s, Scope::global)), oracle_global(sc, s)) << trial;
        ASSERT_EQ(keep_sets(build_mask_unstructured(sc, s, Scope::layerwise)), oracle_layerwise(sc, s)) << trial;
        ASSERT_EQ(keep_sets(build_mask_unstructured(sc, s, Scope::rowwise)), oracle_rowwise(sc, s)) << trial;
    }
}

TEST(Unstructured, ExactZeroCountsOnReferenceModel) {
    const auto sc = score_magnitude(reference_params());
    std::size_t total = 0;
    for (const auto& [n, t] : sc.entries) total += t.size();
    for (double s : {0.0, 0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.875, 0.9, 0.95, 0.99}) {
        EXPECT_EQ(build_mask_unstructured(sc, s, Scope::global).zeros(), floor_count(total, s)) << s;
        const auto l = build_mask_unstructured(sc, s, Scope::layerwise);
        for (const auto& e : l.entries) EXPECT_EQ(e.zeros(), floor_count(e.keep.size(), s)) << s;
    }
}

TEST(Unstructured, InvariantUnderPositiveRescaling) {
    auto p = reference_params(3);
    const auto base = build_mask_unstructured(score_magnitude(p), 0.6);
    for (double c : {1e-3, 0.5, 7.25}) {
        auto q = p;
        for (auto& e : q)
            for (auto& v : e.value.data()) v *= c;
        EXPECT_EQ(build_mask_unstructured(score_magnitude(q), 0.6), base) << c;
    }
}

TEST(NM, GroupExample) {
    const auto p = rows_of({{"w", {0.1, -0.5, 0.2, 0.05}}});
    const auto m = build_mask_nm(score_magnitude(p), 2, 4);
    EXPECT_EQ(m.entries[0].keep, (std::vector<std::uint8_t>{0, 1, 1, 0}));
    EXPECT_EQ(m.pattern, (Pattern{PatternKind::nm, 2, 4}));
}

TEST(NM, OneOfEightIsSevenEighthsSparse) {
    const auto m = build_mask_nm(score_magnitude(reference_params()), 1, 8);
    EXPECT_EQ(m.sparsity(), 0.875);
    EXPECT_EQ(m.target_sparsity, 0.875);
}

TEST(NM, EveryWindowHasExactlyN) {
    const auto sc = score_magnitude(reference_params());
    for (int mm : {4, 8})
        for (int n = 1; n < mm; ++n) {
            const auto m = build_mask_nm(sc, n, mm);
            for (const auto& e : m.entries)
                for (std::size_t g = 0; g < e.keep.size(); g += std::size_t(mm)) {
                    int kept = 0;
                    for (int i = 0; i < mm; ++i) kept += e.keep[g + std::size_t(i)];
                    ASSERT_EQ(kept, n) << e.name;
                }
            EXPECT_EQ(m.zeros() * std::size_t(mm), m.total() * std::size_t(mm - n));
        }
}

TEST(NM, MatchesPerGroupSortOracle) {
    Rng rng(2000);
    for (int trial = 0; trial < 1500; ++trial) {
        const auto sc = random_scores(rng);
        const int m = rng.bernoulli(0.5) ? 4 : 8;
        const int n = 1 + int(rng.below(std::uint64_t(m - 1)));
        ASSERT_EQ(keep_sets(build_mask_nm(sc, n, m)), oracle_nm(sc, n, m)) << trial;
    }
}

TEST(NM, InvalidParameters) {
    const auto sc = score_magnitude(rows_of({{"w", std::vector<double>(12, 1.0)}}));
    EXPECT_THROW(build_mask_nm(sc, 2, 8), ConfigError);
    EXPECT_THROW(build_mask_nm(sc, 0, 4), ConfigError);
    EXPECT_THROW(build_mask_nm(sc, 4, 4), ConfigError);
}

TEST(ApplyMask, IdentityCountingIdempotence) {
    const auto p = reference_params(4);
    EXPECT_EQ(apply_mask(p, all_ones_mask(p)), p);
    const auto m = build_mask_unstructured(score_magnitude(p), 0.3);
    const auto q = apply_mask(p, m);
    auto zeros = [](const ParamSet& ps) {
        std::size_t z = 0;
        for (const auto& e : ps)
            if (e.prunable)
                for (double v : e.value.data()) z += v == 0.0;
        return z;
    };
    EXPECT_EQ(zeros(q), zeros(p) + m.zeros());
    EXPECT_EQ(apply_mask(q, m), q);
    for (std::size_t i = 0; i < p.size(); ++i)
        if (!p.entry(i).prunable) { EXPECT_EQ(p.entry(i), q.entry(i)); }
}

TEST(ApplyMask, Misaligned) {
    const auto p = reference_params();
    auto m = all_ones_mask(p);
    std::swap(m.entries[0], m.entries[1]);
    EXPECT_THROW(apply_mask(p, m), AlignmentError);
    m = all_ones_mask(p);
    m.entries.push_back(m.entries.back());
    EXPECT_THROW(apply_mask(p, m), AlignmentError);
}

TEST(MaskIo, RoundTripAndCorruption) {
    const auto p = reference_params();
    for (const auto& m : {build_mask_unstructured(score_magnitude(p), 0.37), build_mask_nm(score_magnitude(p), 3, 8)}) {
        const auto bytes = encode_mask(m);
        EXPECT_EQ(decode_mask(bytes), m);
        EXPECT_THROW(decode_mask(bytes.substr(0, bytes.size() - 1)), FormatError);
        EXPECT_THROW(decode_mask(bytes + "z"), FormatError);
    }
    // one bit per weight
    const auto m = all_ones_mask(p);
    EXPECT_LT(encode_mask(m).size(), m.total() / 8 + 2048);
}

TEST(Calibration, DeterministicInSeed) {
    const auto c = small_corpus();
    const auto a = make_calibration_set(c, 7);
    const auto b = make_calibration_set(c, 7);
    ASSERT_EQ(a.batches.size(), 8u);
    EXPECT_EQ(a.batches[0].batch_size, 32);
    for (std::size_t i = 0; i < a.batches.size(); ++i) EXPECT_EQ(a.batches[i].token_ids, b.batches[i].token_ids);
    EXPECT_NE(make_calibration_set(c, 8).batches[0].token_ids, a.batches[0].token_ids);
}
