#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "jdna/task/score_table.hpp"
#include "jdna/task/tasks.hpp"
#include "jdna/task/world.hpp"

using namespace jdna;
using namespace jdna::task;

namespace {

const World& world() {
    static const World w = World::generate(7);
    return w;
}

// Independent restatement of the subsample rule from the word attributes.
int rule_oracle(const World& w, const std::vector<int>& words) {
    int f0 = 0;
    for (int x : words) f0 += w.word_attrs[std::size_t(x)][0];
    int mixed = 0;
    for (int i = 0; i < 4; ++i) mixed += w.word_attrs[std::size_t(words[std::size_t(i)])][1];
    for (int i = 4; i < 7; ++i) mixed += w.word_attrs[std::size_t(words[std::size_t(i)])][2];
    return (f0 >= 4 ? 2 : 0) + (mixed >= 4 ? 1 : 0);
}

std::vector<int> words_of(const Example& e) {
    std::vector<int> out;
    for (std::size_t i = 1; i < e.tokens.size(); ++i) out.push_back(e.tokens[i] - tok::word);
    return out;
}

}  // namespace

TEST(World, DeterministicInSeed) {
    const auto a = World::generate(7);
    const auto b = World::generate(7);
    const auto c = World::generate(8);
    EXPECT_EQ(a.facts, b.facts);
    EXPECT_EQ(a.word_attrs, b.word_attrs);
    EXPECT_NE(a.facts, c.facts);
}

TEST(World, EachFeatureOnForHalfTheWords) {
    for (int f = 0; f < kFeatures; ++f) {
        int on = 0;
        for (int x = 0; x < kWords; ++x) on += world().attribute(x, f);
        EXPECT_EQ(on, kWords / 2);
    }
}

TEST(World, TokenRangesDoNotOverlap) {
    EXPECT_LE(tok::word + kWords, tok::subject);
    EXPECT_LE(tok::subject + kSubjects, tok::relation);
    EXPECT_LE(tok::relation + kRelations, tok::object);
    EXPECT_LE(tok::object + kObjects, tok::alphabet);
    EXPECT_LE(tok::alphabet + 4 * kLatentSymbols, tok::vocab_size);
    EXPECT_LE(tok::domain_tag + kDomains, tok::attr);
}

TEST(Subsample, CountIsFloorOfRatio) {
    Rng rng(0);
    EXPECT_EQ(gen_subsample_task(world(), 1000, 0.10, rng, 100).train.size(), 100u);
    EXPECT_EQ(gen_subsample_task(world(), 1000, 0.55, rng, 100).train.size(), 550u);
    EXPECT_EQ(gen_subsample_task(world(), 999, 0.25, rng, 100).train.size(), 249u);
    EXPECT_EQ(subsample_count(100, 0.29), 29);
}

TEST(Subsample, FullRatioIsShuffledCorpus) {
    Rng a(1), b(2);
    const auto t1 = gen_subsample_task(world(), 500, 1.0, a, 100);
    const auto t2 = gen_subsample_task(world(), 500, 1.0, b, 100);
    ASSERT_EQ(t1.train.size(), 500u);
    auto key = [](const Example& e) { return e.tokens; };
    std::multiset<std::vector<int>> s1, s2;
    for (const auto& e : t1.train) s1.insert(key(e));
    for (const auto& e : t2.train) s2.insert(key(e));
    EXPECT_EQ(s1, s2);
    EXPECT_NE(t1.train, t2.train);
}

TEST(Subsample, SameSeedSameSubset) {
    Rng a(3), b(3);
    EXPECT_EQ(gen_subsample_task(world(), 800, 0.4, a, 100).train, gen_subsample_task(world(), 800, 0.4, b, 100).train);
}

TEST(Subsample, SubsetOfFixedCorpus) {
    Rng full_rng(0), part_rng(9);
    const auto full = gen_subsample_task(world(), 400, 1.0, full_rng, 50);
    const auto part = gen_subsample_task(world(), 400, 0.25, part_rng, 50);
    std::multiset<std::vector<int>> pool;
    for (const auto& e : full.train) pool.insert(e.tokens);
    for (const auto& e : part.train) {
        auto it = pool.find(e.tokens);
        ASSERT_NE(it, pool.end());
        pool.erase(it);
    }
}

TEST(Subsample, EvalIdenticalForEveryRatio) {
    Rng a(1), b(2);
    const auto lo = gen_subsample_task(world(), 2000, 0.10, a, 300);
    const auto hi = gen_subsample_task(world(), 2000, 1.00, b, 300);
    EXPECT_EQ(lo.eval, hi.eval);
}

TEST(Subsample, RatioOutOfRange) {
    Rng rng(0);
    EXPECT_THROW(gen_subsample_task(world(), 100, 0.0, rng), ValidationError);
    EXPECT_THROW(gen_subsample_task(world(), 100, 1.01, rng), ValidationError);
    EXPECT_THROW(gen_subsample_task(world(), 100, -0.5, rng), ValidationError);
}

TEST(Subsample, LabelsFollowTheRuleAndAreBalanced) {
    Rng rng(4);
    const auto t = gen_subsample_task(world(), 400, 1.0, rng, 400);
    std::array<int, 4> counts{};
    for (const auto& e : t.eval) {
        ASSERT_EQ(e.tokens.size(), std::size_t(kSubsampleLength + 1));
        EXPECT_EQ(e.tokens[0], tok::cls);
        EXPECT_EQ(e.label, rule_oracle(world(), words_of(e)));
        ++counts[std::size_t(e.label)];
    }
    for (int c : counts) EXPECT_EQ(c, 100);
    for (const auto& e : t.train) EXPECT_EQ(e.label, rule_oracle(world(), words_of(e)));
}

TEST(Multidomain, CorpusHasRequestedCounts) {
    Rng rng(0);
    const auto t = gen_multidomain_task(world(), 10000, 100, rng, Protocol::few_shot, 64, 50);
    std::array<int, 2> per{};
    for (const auto& e : t.pretrain) ++per[std::size_t(e.domain)];
    EXPECT_EQ(per[0], 10000);
    EXPECT_EQ(per[1], 100);
    EXPECT_EQ(t.finetune[0].size(), 64u);
    EXPECT_EQ(t.finetune[1].size(), 64u);
    EXPECT_EQ(t.eval[1].size(), 50u);
}

TEST(Multidomain, ZeroShotHasEmptyFinetuneSplit) {
    Rng a(0), b(0);
    const auto z = gen_multidomain_task(world(), 300, 30, a, Protocol::zero_shot, 64, 40);
    const auto f = gen_multidomain_task(world(), 300, 30, b, Protocol::few_shot, 64, 40);
    EXPECT_TRUE(z.finetune[0].empty());
    EXPECT_TRUE(z.finetune[1].empty());
    // the protocol does not change what is evaluated
    EXPECT_EQ(z.eval[1], f.eval[1]);
    EXPECT_EQ(z.pretrain, f.pretrain);
}

TEST(Multidomain, InvalidCounts) {
    Rng rng(0);
    EXPECT_THROW(gen_multidomain_task(world(), 100, 100, rng), ValidationError);
    EXPECT_THROW(gen_multidomain_task(world(), 100, 0, rng), ValidationError);
    EXPECT_THROW(gen_multidomain_task(world(), 10, 20, rng), ValidationError);
}

TEST(Multidomain, DecodingRecoversTheLatentSequence) {
    Rng rng(5);
    const auto t = gen_multidomain_task(world(), 400, 40, rng, Protocol::few_shot, 16, 200);
    int errors = 0;
    for (int d = 0; d < kDomains; ++d)
        for (const auto& e : t.eval[std::size_t(d)]) {
            Latent target{};
            for (int i = 0; i < kLatentLength; ++i) target[std::size_t(i)] = e.targets[std::size_t(kTranslationTargetOffset + i)];
            const auto z = world().decode_target(Domain(d), target);
            // re-render the source from the decoded latent and compare with the visible source span
            const auto src = world().render_source(Domain(d), z);
            for (int i = 0; i < kLatentLength; ++i) errors += src[std::size_t(i)] != e.tokens[std::size_t(1 + i)];
        }
    EXPECT_EQ(errors, 0);
}

TEST(Multidomain, DomainsUseDistinctRules) {
    EXPECT_NE(world().rules[0].order, world().rules[1].order);
    const Latent z{0, 1, 2, 3, 4, 5};
    EXPECT_NE(world().render_target(Domain::majority, z), world().render_target(Domain::minority, z));
}

TEST(Multidomain, QueryMasksTheTargetSpan) {
    const Latent z{3, 1, 4, 1, 5, 9};
    const auto q = translation_query(world(), Domain::minority, z);
    EXPECT_EQ(q.tokens[0], tok::domain_tag + 1);
    EXPECT_EQ(q.tokens[std::size_t(kLatentLength + 1)], tok::sep);
    for (std::size_t i = 0; i < q.tokens.size(); ++i) {
        if (int(i) >= kTranslationTargetOffset) {
            EXPECT_EQ(q.tokens[i], tok::mask);
            EXPECT_NE(q.targets[i], model::kIgnoreLabel);
        } else {
            EXPECT_EQ(q.targets[i], model::kIgnoreLabel);
        }
    }
}

TEST(ContextQa, OpenItemContainsItsFactClosedDoesNot) {
    Rng a(1), b(1);
    const auto open = gen_contextqa_task(world(), true, a);
    const auto closed = gen_contextqa_task(world(), false, b);
    ASSERT_EQ(open.eval.size(), closed.eval.size());
    for (std::size_t i = 0; i < open.eval.size(); ++i) {
        const auto& o = open.eval[i];
        const auto& c = closed.eval[i];
        const int object = o.targets.back();
        EXPECT_EQ(std::count(o.tokens.begin(), o.tokens.end(), object), 1);
        EXPECT_EQ(std::count(c.tokens.begin(), c.tokens.end(), object), 0);
        EXPECT_EQ(c.targets.back(), object);
        EXPECT_EQ(c.tokens.back(), tok::mask);
        EXPECT_EQ(std::vector<int>(o.tokens.end() - 3, o.tokens.end()), c.tokens);
    }
}

TEST(ContextQa, ExtractionOracleIsPerfectOnOpenBook) {
    Rng rng(2);
    const auto t = gen_contextqa_task(world(), true, rng);
    std::size_t correct = 0;
    for (const auto& e : t.eval) correct += open_book_oracle(e) == e.targets.back();
    EXPECT_EQ(correct, t.eval.size());
    Rng rng2(2);
    for (const auto& e : gen_contextqa_task(world(), false, rng2).eval) EXPECT_EQ(open_book_oracle(e), -1);
}

TEST(ContextQa, AnswersComeFromTheFactTable) {
    Rng rng(3);
    for (const auto& e : gen_contextqa_task(world(), false, rng).eval) {
        const int s = e.tokens[0] - tok::subject, r = e.tokens[1] - tok::relation;
        EXPECT_EQ(e.targets.back(), tok::object + world().facts[std::size_t(s)][std::size_t(r)]);
    }
}

TEST(ContextQa, EvalQuestionsDisjointFromFinetune) {
    Rng rng(4);
    const auto t = gen_contextqa_task(world(), false, rng, 512);
    std::set<std::vector<int>> train;
    for (const auto& e : t.train) train.insert(e.tokens);
    EXPECT_EQ(train.size(), 512u);
    for (const auto& e : t.eval) EXPECT_FALSE(train.count(e.tokens));
    EXPECT_EQ(t.eval.size(), std::size_t(kSubjects * kRelations / 2));
    Rng rng2(4);
    EXPECT_THROW(gen_contextqa_task(world(), false, rng2, 513), ValidationError);
}

TEST(ContextQa, SameSeedSameFactsAcrossVariants) {
    Rng a(6), b(6);
    const auto open = gen_contextqa_task(world(), true, a);
    const auto closed = gen_contextqa_task(world(), false, b);
    for (std::size_t i = 0; i < open.train.size(); ++i) EXPECT_EQ(open.train[i].targets.back(), closed.train[i].targets.back());
}

TEST(PretrainCorpus, DefinitionsStateTrueAttributes) {
    PretrainCorpusSpec spec;
    spec.majority_n = 200;
    spec.minority_n = 2;
    spec.definition_sequences = 100;
    spec.fact_sequences = 100;
    const auto c = pretrain_corpus(world(), spec);
    ASSERT_EQ(c.families[0].size(), 100u);
    for (const auto& seq : c.families[0]) {
        ASSERT_EQ(seq.size(), std::size_t(kDefinitionsPerSequence * 4));
        for (std::size_t k = 0; k < seq.size(); k += 4) {
            const int x = seq[k] - tok::word;
            for (int f = 0; f < kFeatures; ++f)
                EXPECT_EQ(seq[k + 1 + std::size_t(f)], tok::attr + 2 * f + world().attribute(x, f));
        }
    }
    EXPECT_EQ(c.families[2].size(), 202u);
}

TEST(PretrainCorpus, FactSequencesAreTrueExceptRestatedCounterfactuals) {
    PretrainCorpusSpec spec;
    spec.majority_n = 20;
    spec.minority_n = 2;
    spec.definition_sequences = 1;
    spec.fact_sequences = 2000;
    const auto c = pretrain_corpus(world(), spec);
    int shortened = 0, counterfactual = 0;
    auto triple = [](const std::vector<int>& seq, std::size_t k) {
        return std::vector<int>(seq.begin() + std::ptrdiff_t(3 * k), seq.begin() + std::ptrdiff_t(3 * k + 3));
    };
    for (const auto& seq : c.families[1]) {
        ASSERT_EQ(seq.size() % 3, 0u);
        const std::size_t n = seq.size() / 3;
        ASSERT_GE(n, 2u);
        ASSERT_LE(n, std::size_t(kFactsPerSequence));
        shortened += n < std::size_t(kFactsPerSequence);
        const auto last = triple(seq, n - 1);
        if (n < std::size_t(kFactsPerSequence)) {
            // a restatement: the final triple repeats an earlier one
            bool found = false;
            for (std::size_t k = 0; k + 1 < n; ++k) found |= triple(seq, k) == last;
            EXPECT_TRUE(found);
        }
        for (std::size_t k = 0; k < n; ++k) {
            const int s = seq[3 * k] - tok::subject, r = seq[3 * k + 1] - tok::relation, o = seq[3 * k + 2] - tok::object;
            ASSERT_TRUE(s >= 0 && s < kSubjects && r >= 0 && r < kRelations && o >= 0 && o < kObjects);
            if (o == world().facts[std::size_t(s)][std::size_t(r)]) continue;
            // a false triple is always the restated one
            EXPECT_EQ(triple(seq, k), last);
            ++counterfactual;
        }
    }
    // half the sequences are restated, and a restatement keeps 1-3 triples before the repeat
    EXPECT_NEAR(shortened / 2000.0, 1.0 / 3.0, 0.05);
    EXPECT_GT(counterfactual, 0);
}

TEST(PretrainCorpus, MaskedExamplesTargetOnlyMaskedPositions) {
    const auto c = pretrain_corpus(world(), PretrainCorpusSpec{});
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const auto& seq = sample_sequence(c, rng);
        const auto e = mlm_example(seq, rng);
        ASSERT_EQ(e.tokens.size(), seq.size());
        int targets = 0;
        for (std::size_t k = 0; k < seq.size(); ++k) {
            if (e.targets[k] == model::kIgnoreLabel) {
                EXPECT_EQ(e.tokens[k], seq[k]);
            } else {
                EXPECT_EQ(e.tokens[k], tok::mask);
                EXPECT_EQ(e.targets[k], seq[k]);
                ++targets;
            }
        }
        EXPECT_GE(targets, 1);
    }
}

TEST(PretrainCorpus, BatchesAreValidForTheModel) {
    const auto c = pretrain_corpus(world(), PretrainCorpusSpec{});
    Rng rng(1);
    model::ModelConfig cfg;
    for (int i = 0; i < 10; ++i) EXPECT_NO_THROW(model::validate(cfg, mlm_batch(c, 32, rng)));
}

TEST(Batching, PadsAndKeepsLengths) {
    std::vector<Example> items(2);
    items[0].tokens = {1, 20, 21};
    items[0].label = 2;
    items[1].tokens = {1, 22};
    items[1].label = 0;
    const auto b = make_batch(items, model::HeadKind::classification);
    EXPECT_EQ(b.seq_len, 3);
    EXPECT_EQ(b.token_ids, (std::vector<int>{1, 20, 21, 1, 22, tok::pad}));
    EXPECT_EQ(b.lengths, (std::vector<int>{3, 2}));
    EXPECT_EQ(b.labels, (std::vector<int>{2, 0}));
    EXPECT_EQ(make_batches(std::vector<Example>(5, items[0]), model::HeadKind::classification, 2).size(), 3u);
}

TEST(CorpusDump, RoundTrip) {
    Rng rng(2);
    auto items = gen_contextqa_task(world(), true, rng, 10).train;
    Rng rng2(3);
    auto sub = gen_subsample_task(world(), 20, 1.0, rng2, 4).train;
    items.insert(items.end(), sub.begin(), sub.end());
    std::stringstream ss;
    dump_examples(ss, items);
    EXPECT_EQ(load_examples(ss), items);
    std::stringstream bad("0\t1\t2 3\n");
    EXPECT_THROW(load_examples(bad), ValidationError);
}

TEST(ScoreTable, ParsesTableRows) {
    const auto t = parse_score_table("task,human,model\nSST-2,97.8,96.2\nCSQA,89.0,72.1\n");
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0].task, "SST-2");
    EXPECT_EQ(t.rows[0].human, 97.8);
    EXPECT_EQ(t.rows[0].model, 96.2);
    EXPECT_EQ(t.rows[1].human, 89.0);
    EXPECT_EQ(t.rows[1].model, 72.1);
    EXPECT_EQ(t.rows[1].human_text, "89.0");
    EXPECT_EQ(t.rows[1].line, 3u);
}

TEST(ScoreTable, ColumnOrderAndWhitespace) {
    const auto t = parse_score_table("\xEF\xBB\xBFmodel, task ,human,extra\r\n 72.1 ,CSQA, 89.0,x\r\n\n");
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0].task, "CSQA");
    EXPECT_EQ(t.rows[0].human, 89.0);
    EXPECT_EQ(t.rows[0].model, 72.1);
}

TEST(ScoreTable, Errors) {
    auto row_of = [](const char* text) -> std::size_t {
        try {
            parse_score_table(text);
        } catch (const ValidationError& e) {
            return e.row();
        }
        return 0;
    };
    EXPECT_EQ(row_of("task,human,model\nA,50,40\nB,0,40\n"), 3u);
    EXPECT_EQ(row_of("task,human,model\nA,-1,40\n"), 2u);
    EXPECT_EQ(row_of("task,human\nA,50\n"), 1u);
    EXPECT_EQ(row_of("task,human,model\nA,fifty,40\n"), 2u);
    EXPECT_EQ(row_of("task,human,model\nA,50,40x\n"), 2u);
    EXPECT_EQ(row_of("task,human,model\nA,50\n"), 2u);
    EXPECT_EQ(row_of("task,human,model\nA,101,40\n"), 2u);
    EXPECT_EQ(row_of(""), 1u);
    EXPECT_TRUE(parse_score_table("task,human,model\n").rows.empty());
}
