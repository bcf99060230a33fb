#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "jdna/core/error.hpp"
#include "jdna/core/rng.hpp"
#include "jdna/model/config.hpp"
#include "jdna/task/world.hpp"

namespace jdna::task {

// One input sequence. Classification examples use `label`; token-prediction examples use
// `targets` (same length as tokens, model::kIgnoreLabel where nothing is predicted).
struct Example {
    std::vector<int> tokens;
    std::vector<int> targets;
    int label = model::kIgnoreLabel;
    int domain = 0;

    friend bool operator==(const Example&, const Example&) = default;
};

struct EvalSet {
    std::string name;
    std::vector<Example> items;
};

// A downstream task: fine-tuning data plus fixed evaluation sets (the first is the headline metric).
struct Task {
    std::string name;
    model::HeadKind head = model::HeadKind::token_prediction;
    int num_classes = 0;
    std::vector<Example> train;
    std::vector<EvalSet> evals;
};

inline model::ModelConfig config_for(model::ModelConfig base, const Task& task) {
    base.head = task.head;
    base.num_classes = task.head == model::HeadKind::classification ? task.num_classes : 0;
    return base;
}

inline model::Batch make_batch(std::span<const Example> items, model::HeadKind head) {
    if (items.empty()) throw ValidationError("cannot batch zero examples");
    model::Batch b;
    b.batch_size = int(items.size());
    for (const auto& e : items) b.seq_len = std::max(b.seq_len, int(e.tokens.size()));
    const auto T = std::size_t(b.seq_len);
    b.token_ids.assign(items.size() * T, tok::pad);
    if (head == model::HeadKind::token_prediction) b.labels.assign(items.size() * T, model::kIgnoreLabel);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& e = items[i];
        std::copy(e.tokens.begin(), e.tokens.end(), b.token_ids.begin() + std::ptrdiff_t(i * T));
        b.lengths.push_back(int(e.tokens.size()));
        if (head == model::HeadKind::classification)
            b.labels.push_back(e.label);
        else
            std::copy(e.targets.begin(), e.targets.end(), b.labels.begin() + std::ptrdiff_t(i * T));
    }
    return b;
}

// Splits `items` into consecutive batches of at most `batch_size`.
inline std::vector<model::Batch> make_batches(std::span<const Example> items, model::HeadKind head, int batch_size) {
    std::vector<model::Batch> out;
    for (std::size_t i = 0; i < items.size(); i += std::size_t(batch_size))
        out.push_back(make_batch(items.subspan(i, std::min(items.size() - i, std::size_t(batch_size))), head));
    return out;
}

// ---------------------------------------------------------------------------------------------
// Setting: fine-tuning data volume

inline constexpr int kSubsampleLength = 7;
inline constexpr int kSubsampleClasses = 4;
inline constexpr int kDefaultEvalItems = 2000;

// label = 2 * [at least 4 of 7 words carry feature 0]
//       + [feature 1 over words 1-4 plus feature 2 over words 5-7 sums to at least 4]
inline int subsample_label(const World& w, std::span<const int> words) {
    int f0 = 0, mixed = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
        f0 += w.attribute(words[i], 0);
        mixed += w.attribute(words[i], i < 4 ? 1 : 2);
    }
    return 2 * (f0 >= 4 ? 1 : 0) + (mixed >= 4 ? 1 : 0);
}

inline Example subsample_example(const World& w, std::span<const int> words) {
    Example e;
    e.tokens.push_back(tok::cls);
    for (int x : words) e.tokens.push_back(tok::word + x);
    e.label = subsample_label(w, words);
    return e;
}

// `n` class-balanced items (class c receives n/4, plus one for c < n%4), shuffled.
inline std::vector<Example> subsample_corpus(const World& w, int n, Rng& rng) {
    std::array<int, kSubsampleClasses> quota{};
    for (int c = 0; c < kSubsampleClasses; ++c) quota[c] = n / kSubsampleClasses + (c < n % kSubsampleClasses ? 1 : 0);
    std::vector<Example> out;
    out.reserve(std::size_t(n));
    std::array<int, kSubsampleLength> words{};
    while (int(out.size()) < n) {
        for (auto& x : words) x = int(rng.below(kWords));
        const int label = subsample_label(w, words);
        if (quota[label] == 0) continue;
        --quota[label];
        out.push_back(subsample_example(w, words));
    }
    rng.shuffle(out);
    return out;
}

// Number of items a ratio selects from a corpus of `n`; the epsilon absorbs binary rounding of r*n.
inline int subsample_count(int n, double r) { return int(std::floor(r * double(n) + 1e-9)); }

struct SubsampleTask {
    std::vector<Example> train;
    std::vector<Example> eval;
};

// Train: a uniform random subset of floor(r * base_size) items drawn (by `rng`) from the world's fixed
// corpus of base_size items. Eval: a fixed world-derived set, independent of r and of `rng`.
inline SubsampleTask gen_subsample_task(const World& w, int base_size, double r, Rng& rng,
                                        int eval_items = kDefaultEvalItems) {
    if (!(r > 0.0 && r <= 1.0)) throw ValidationError("data ratio must be in (0, 1], got " + std::to_string(r));
    if (base_size <= 0) throw ValidationError("base_size must be positive");
    Rng corpus_rng(derive_seed(derive_seed(w.seed, stream_subsample_corpus), std::uint64_t(base_size)));
    auto corpus = subsample_corpus(w, base_size, corpus_rng);
    Rng eval_rng(derive_seed(w.seed, stream_subsample_eval));
    SubsampleTask t;
    t.eval = subsample_corpus(w, eval_items, eval_rng);
    rng.shuffle(corpus);
    corpus.resize(std::size_t(subsample_count(base_size, r)));
    t.train = std::move(corpus);
    return t;
}

// ---------------------------------------------------------------------------------------------
// Setting: majority vs minority domains ("translation" by substitution + permutation)

using Latent = std::array<int, kLatentLength>;

inline constexpr int kTranslationTargetOffset = kLatentLength + 2;  // [DOM] src x6 [SEP] -> first target slot

inline Latent random_latent(Rng& rng) {
    Latent z{};
    for (auto& s : z) s = int(rng.below(kLatentSymbols));
    return z;
}

// Fully visible pair (pre-training form): [DOM] source [SEP] target.
inline Example translation_pair(const World& w, Domain d, const Latent& z) {
    Example e;
    e.domain = int(d);
    e.tokens.push_back(tok::domain_tag + int(d));
    for (int t : w.render_source(d, z)) e.tokens.push_back(t);
    e.tokens.push_back(tok::sep);
    for (int t : w.render_target(d, z)) e.tokens.push_back(t);
    e.targets = e.tokens;
    return e;
}

// Query form: target span replaced by [MASK], targets only on that span.
inline Example translation_query(const World& w, Domain d, const Latent& z) {
    Example e = translation_pair(w, d, z);
    e.targets.assign(e.tokens.size(), model::kIgnoreLabel);
    for (int i = kTranslationTargetOffset; i < int(e.tokens.size()); ++i) {
        e.targets[std::size_t(i)] = e.tokens[std::size_t(i)];
        e.tokens[std::size_t(i)] = tok::mask;
    }
    return e;
}

enum class Protocol { zero_shot, few_shot };

inline const char* to_string(Protocol p) { return p == Protocol::zero_shot ? "zero_shot" : "few_shot"; }

struct MultidomainTask {
    std::vector<Example> pretrain;                 // full pairs, majority_n then minority_n, shuffled
    std::array<std::vector<Example>, kDomains> finetune;  // empty under zero-shot
    std::array<std::vector<Example>, kDomains> eval;
};

inline MultidomainTask gen_multidomain_task(const World& w, int majority_n, int minority_n, Rng& rng,
                                            Protocol protocol = Protocol::few_shot, int few_shot_n = 64,
                                            int eval_items = kDefaultEvalItems) {
    if (!(majority_n > minority_n && minority_n > 0))
        throw ValidationError("need majority_n > minority_n > 0, got " + std::to_string(majority_n) + " and " +
                              std::to_string(minority_n));
    if (few_shot_n < 0) throw ValidationError("few_shot_n must be non-negative");
    MultidomainTask t;
    for (int i = 0; i < majority_n; ++i) t.pretrain.push_back(translation_pair(w, Domain::majority, random_latent(rng)));
    for (int i = 0; i < minority_n; ++i) t.pretrain.push_back(translation_pair(w, Domain::minority, random_latent(rng)));
    rng.shuffle(t.pretrain);
    for (int d = 0; d < kDomains; ++d) {
        for (int i = 0; i < few_shot_n; ++i) {
            auto q = translation_query(w, Domain(d), random_latent(rng));
            if (protocol == Protocol::few_shot) t.finetune[std::size_t(d)].push_back(std::move(q));
        }
        for (int i = 0; i < eval_items; ++i)
            t.eval[std::size_t(d)].push_back(translation_query(w, Domain(d), random_latent(rng)));
    }
    return t;
}

// ---------------------------------------------------------------------------------------------
// Setting: open-book vs closed-book question answering over the world's fact table

struct Fact {
    int subject = 0, relation = 0, object = 0;
};

inline std::vector<Fact> all_facts(const World& w) {
    std::vector<Fact> out;
    for (int s = 0; s < kSubjects; ++s)
        for (int r = 0; r < kRelations; ++r) out.push_back({s, r, w.facts[s][r]});
    return out;
}

inline std::array<int, 3> fact_tokens(const Fact& f) {
    return {tok::subject + f.subject, tok::relation + f.relation, tok::object + f.object};
}

// Closed: s r [MASK]. Open: s r o s r [MASK]. Target: the object at the [MASK].
inline Example qa_item(const Fact& f, bool open_book) {
    Example e;
    const auto ft = fact_tokens(f);
    if (open_book) e.tokens.insert(e.tokens.end(), ft.begin(), ft.end());
    e.tokens.push_back(ft[0]);
    e.tokens.push_back(ft[1]);
    e.tokens.push_back(tok::mask);
    e.targets.assign(e.tokens.size(), model::kIgnoreLabel);
    e.targets.back() = ft[2];
    return e;
}

struct ContextQaTask {
    std::vector<Example> train;
    std::vector<Example> eval;
};

// Facts are split once per world into disjoint fine-tune and eval halves; `rng` picks and orders
// the `finetune_n` fine-tuning questions.
inline ContextQaTask gen_contextqa_task(const World& w, bool open_book, Rng& rng, int finetune_n = 128) {
    auto facts = all_facts(w);
    Rng split_rng(derive_seed(w.seed, stream_contextqa));
    split_rng.shuffle(facts);
    const std::size_t half = facts.size() / 2;
    if (finetune_n < 0 || std::size_t(finetune_n) > half)
        throw ValidationError("finetune_n must be in [0, " + std::to_string(half) + "]");
    std::vector<Fact> pool(facts.begin(), facts.begin() + std::ptrdiff_t(half));
    rng.shuffle(pool);
    ContextQaTask t;
    for (int i = 0; i < finetune_n; ++i) t.train.push_back(qa_item(pool[std::size_t(i)], open_book));
    for (std::size_t i = half; i < facts.size(); ++i) t.eval.push_back(qa_item(facts[i], open_book));
    return t;
}

// Reads the answer straight out of an open-book item's prepended fact; -1 if absent.
inline int open_book_oracle(const Example& e) {
    if (e.tokens.size() != 6) return -1;
    const int s = e.tokens[0], r = e.tokens[1];
    if (e.tokens[3] != s || e.tokens[4] != r || e.tokens[5] != tok::mask) return -1;
    return e.tokens[2];
}

// ---------------------------------------------------------------------------------------------
// Pre-training corpus (masked-token objective)

struct PretrainCorpusSpec {
    int majority_n = 10000;
    int minority_n = 100;
    int definition_sequences = 2000;
    int fact_sequences = 4000;

    friend bool operator==(const PretrainCorpusSpec&, const PretrainCorpusSpec&) = default;
};

enum class CorpusFamily { definitions = 0, facts = 1, translation = 2 };

struct PretrainCorpus {
    std::array<std::vector<std::vector<int>>, 3> families;  // indexed by CorpusFamily
    std::array<double, 3> weights{0.2, 0.5, 0.3};
};

inline constexpr int kDefinitionsPerSequence = 3;
inline constexpr int kFactsPerSequence = 4;

// Definitions: "w a0 a1 a2" x3. Facts: "s r o" x4, half ending in a repeat (see below). Translation: the multidomain pre-training pairs.
inline PretrainCorpus pretrain_corpus(const World& w, const PretrainCorpusSpec& spec) {
    PretrainCorpus c;
    Rng rng(derive_seed(w.seed, stream_pretrain_corpus));
    for (int i = 0; i < spec.definition_sequences; ++i) {
        std::vector<int> seq;
        for (int k = 0; k < kDefinitionsPerSequence; ++k) {
            const int x = int(rng.below(kWords));
            seq.push_back(tok::word + x);
            for (int f = 0; f < kFeatures; ++f) seq.push_back(tok::attr + 2 * f + w.attribute(x, f));
        }
        c.families[0].push_back(std::move(seq));
    }
    const auto facts = all_facts(w);
    for (int i = 0; i < spec.fact_sequences; ++i) {
        std::vector<int> seq;
        for (int k = 0; k < kFactsPerSequence; ++k) {
            const auto ft = fact_tokens(facts[rng.below(facts.size())]);
            seq.insert(seq.end(), ft.begin(), ft.end());
        }
        // half of the sequences keep 1-3 triples and restate one of them; half of those restate an
        // in-context variant with a random object, which only copying can predict
        if (rng.bernoulli(0.5)) {
            const auto kept = 1 + rng.below(kFactsPerSequence - 1);
            seq.resize(3 * kept);
            const auto from = 3 * rng.below(kept);
            if (rng.bernoulli(0.5)) seq[from + 2] = tok::object + int(rng.below(kObjects));
            for (int i = 0; i < 3; ++i) seq.push_back(seq[from + std::size_t(i)]);
        }
        c.families[1].push_back(std::move(seq));
    }
    Rng md_rng(derive_seed(w.seed, stream_multidomain));
    auto md = gen_multidomain_task(w, spec.majority_n, spec.minority_n, md_rng);
    for (auto& e : md.pretrain) c.families[2].push_back(std::move(e.tokens));
    return c;
}

inline MultidomainTask world_multidomain_task(const World& w, const PretrainCorpusSpec& spec, Protocol protocol,
                                              int few_shot_n = 64, int eval_items = kDefaultEvalItems) {
    Rng md_rng(derive_seed(w.seed, stream_multidomain));
    return gen_multidomain_task(w, spec.majority_n, spec.minority_n, md_rng, protocol, few_shot_n, eval_items);
}

inline constexpr double kMaskRate = 0.25;

// Masked-token example: each non-special position is masked with probability kMaskRate (at least one).
// Half of the time, translation pairs instead have their whole target span masked and fact sequences
// all of their objects.
inline Example mlm_example(const std::vector<int>& seq, Rng& rng) {
    Example e;
    e.tokens = seq;
    e.targets.assign(seq.size(), model::kIgnoreLabel);
    const bool translation = !seq.empty() && (seq[0] == tok::domain_tag || seq[0] == tok::domain_tag + 1);
    if (translation && rng.bernoulli(0.5)) {
        for (std::size_t i = kTranslationTargetOffset; i < seq.size(); ++i) {
            e.targets[i] = seq[i];
            e.tokens[i] = tok::mask;
        }
        return e;
    }
    const bool facts = !seq.empty() && seq[0] >= tok::subject && seq[0] < tok::subject + kSubjects;
    if (facts && rng.bernoulli(0.5)) {
        // an earlier triple restated at the end keeps its object visible
        const std::size_t n = seq.size();
        std::size_t shown = n;
        for (std::size_t i = 0; n >= 6 && i + 3 < n; i += 3)
            if (seq[i] == seq[n - 3] && seq[i + 1] == seq[n - 2]) shown = i + 2;
        for (std::size_t i = 2; i < n; i += 3) {
            if (i == shown) continue;
            e.targets[i] = seq[i];
            e.tokens[i] = tok::mask;
        }
        return e;
    }
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < seq.size(); ++i)
        if (!tok::is_special(seq[i])) candidates.push_back(i);
    bool any = false;
    for (auto i : candidates)
        if (rng.bernoulli(kMaskRate)) {
            e.targets[i] = seq[i];
            e.tokens[i] = tok::mask;
            any = true;
        }
    if (!any && !candidates.empty()) {
        const auto i = candidates[rng.below(candidates.size())];
        e.targets[i] = seq[i];
        e.tokens[i] = tok::mask;
    }
    return e;
}

inline const std::vector<int>& sample_sequence(const PretrainCorpus& c, Rng& rng) {
    double u = rng.uniform();
    std::size_t fam = 0;
    for (; fam + 1 < c.families.size(); ++fam) {
        if (u < c.weights[fam] && !c.families[fam].empty()) break;
        u -= c.weights[fam];
    }
    const auto& f = c.families[fam];
    return f[rng.below(f.size())];
}

inline model::Batch mlm_batch(const PretrainCorpus& c, int batch_size, Rng& rng) {
    std::vector<Example> items;
    for (int i = 0; i < batch_size; ++i) items.push_back(mlm_example(sample_sequence(c, rng), rng));
    return make_batch(items, model::HeadKind::token_prediction);
}

// ---------------------------------------------------------------------------------------------
// Line-oriented text dump: "domain<TAB>label<TAB>tokens<TAB>targets", tokens space-separated,
// targets "-" when the example has none.

inline void dump_examples(std::ostream& out, std::span<const Example> items) {
    for (const auto& e : items) {
        out << e.domain << '\t' << e.label << '\t';
        for (std::size_t i = 0; i < e.tokens.size(); ++i) out << (i ? " " : "") << e.tokens[i];
        out << '\t';
        if (e.targets.empty()) out << '-';
        for (std::size_t i = 0; i < e.targets.size(); ++i) out << (i ? " " : "") << e.targets[i];
        out << '\n';
    }
}

inline std::vector<Example> load_examples(std::istream& in) {
    std::vector<Example> out;
    std::string line;
    std::size_t lineno = 0;
    auto ints = [&](const std::string& field) {
        std::vector<int> v;
        if (field == "-") return v;
        std::istringstream ss(field);
        int x;
        while (ss >> x) v.push_back(x);
        if (!ss.eof()) throw ValidationError("non-integer token in corpus line", lineno);
        return v;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream ss(line);
        std::string f;
        while (std::getline(ss, f, '\t')) fields.push_back(f);
        if (fields.size() != 4) throw ValidationError("expected 4 tab-separated fields", lineno);
        Example e;
        try {
            e.domain = std::stoi(fields[0]);
            e.label = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw ValidationError("bad domain/label field", lineno);
        }
        e.tokens = ints(fields[2]);
        e.targets = ints(fields[3]);
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace jdna::task
