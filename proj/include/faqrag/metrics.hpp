#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "dense.hpp"
#include "error.hpp"
#include "generation.hpp"
#include "ranking.hpp"
#include "retriever.hpp"
#include "tokenizer.hpp"

namespace faqrag {

enum class GainScheme {
    Linear,       // gain = grade
    Exponential,  // gain = 2^grade - 1
};

inline double gain_of(int grade, GainScheme scheme) {
    if (grade <= 0) return 0.0;
    return scheme == GainScheme::Linear ? grade : std::exp2(grade) - 1.0;
}

// Raised when NDCG is requested for a topic without any relevant passage, which in this
// collection means an out-of-KB question was routed to the wrong measure.
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

// NDCG@cutoff with discount 1/log2(rank + 1), ranks from 1. Unjudged passages have gain 0.
inline double ndcg(const std::vector<std::string>& ranked_ids, const std::map<std::string, int>& judgments,
                   int cutoff, GainScheme scheme = GainScheme::Linear) {
    std::vector<double> ideal;
    for (const auto& [id, grade] : judgments)
        if (grade > 0) ideal.push_back(gain_of(grade, scheme));
    if (ideal.empty()) throw UndefinedMetricError("NDCG is undefined for a topic with no relevant passages");
    if (cutoff < 1) throw Error("cutoff must be at least 1");
    std::sort(ideal.begin(), ideal.end(), std::greater<>());

    const auto k = static_cast<std::size_t>(cutoff);
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ranked_ids.size()); ++i) {
        auto it = judgments.find(ranked_ids[i]);
        if (it != judgments.end()) dcg += gain_of(it->second, scheme) / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

inline double ndcg(const Ranking& ranking, const std::map<std::string, int>& judgments, int cutoff,
                   GainScheme scheme = GainScheme::Linear) {
    return ndcg(ranking.passage_ids(), judgments, cutoff, scheme);
}

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Zero only when p + r is exactly zero; negative cosine sums pass through unguarded, as
// in the reference BERTScore code.
inline double harmonic_mean(double p, double r) { return (p + r) != 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// Unigram overlap with clipped counts.
inline PRF rouge1(std::string_view candidate, std::string_view reference, const TokenizerConfig& tokenizer = {}) {
    const auto ref = tokenize(reference, tokenizer);
    if (ref.empty()) throw Error("ROUGE-1 needs a non-empty reference");
    const auto cand = tokenize(candidate, tokenizer);
    if (cand.empty()) return {};
    std::unordered_map<std::string, int> ref_counts;
    for (const auto& t : ref) ++ref_counts[t];
    std::unordered_map<std::string, int> cand_counts;
    for (const auto& t : cand) ++cand_counts[t];
    double overlap = 0.0;
    for (const auto& [t, c] : cand_counts)
        if (auto it = ref_counts.find(t); it != ref_counts.end()) overlap += std::min(c, it->second);
    PRF out;
    out.precision = overlap / static_cast<double>(cand.size());
    out.recall = overlap / static_cast<double>(ref.size());
    out.f1 = harmonic_mean(out.precision, out.recall);
    return out;
}

class TokenEmbedder {
public:
    virtual ~TokenEmbedder() = default;
    virtual std::vector<std::string> tokens(std::string_view text) const = 0;
    virtual std::vector<Vector> embed(const std::vector<std::string>& tokens) = 0;
    virtual std::string id() const = 0;
};

// Context-free token vectors from hashed character trigrams.
class HashedTokenEmbedder : public TokenEmbedder {
public:
    explicit HashedTokenEmbedder(int dim = 256, TokenizerConfig tokenizer = {})
        : hasher_(dim, tokenizer), tokenizer_(std::move(tokenizer)) {}

    std::vector<std::string> tokens(std::string_view text) const override { return tokenize(text, tokenizer_); }

    std::vector<Vector> embed(const std::vector<std::string>& tokens) override {
        std::vector<Vector> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) {
            auto v = hasher_.token_counts(t);
            const double n = l2_norm(v);
            if (n > 0.0)
                for (auto& x : v) x /= n;
            out.push_back(std::move(v));
        }
        return out;
    }

    std::string id() const override { return hasher_.id(); }

private:
    HashedNGramProvider hasher_;
    TokenizerConfig tokenizer_;
};

// Embeds every token as its own text through any EmbeddingProvider (e.g. a remote encoder).
class ProviderTokenEmbedder : public TokenEmbedder {
public:
    ProviderTokenEmbedder(std::shared_ptr<EmbeddingProvider> provider, TokenizerConfig tokenizer = {})
        : provider_(std::move(provider)), tokenizer_(std::move(tokenizer)) {}

    std::vector<std::string> tokens(std::string_view text) const override { return tokenize(text, tokenizer_); }
    std::vector<Vector> embed(const std::vector<std::string>& tokens) override { return provider_->embed(tokens); }
    std::string id() const override { return provider_->id(); }

private:
    std::shared_ptr<EmbeddingProvider> provider_;
    TokenizerConfig tokenizer_;
};

// Greedy cosine matching between token embeddings, no idf weighting and no baseline
// rescaling.
inline PRF bertscore_vectors(const std::vector<Vector>& cand, const std::vector<Vector>& ref) {
    if (cand.empty() || ref.empty()) throw Error("BERTScore needs non-empty candidate and reference");
    std::vector<double> best_for_ref(ref.size(), -std::numeric_limits<double>::infinity());
    std::vector<double> best_for_cand(cand.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < cand.size(); ++i) {
        for (std::size_t j = 0; j < ref.size(); ++j) {
            const double s = cosine(cand[i], ref[j]);
            best_for_cand[i] = std::max(best_for_cand[i], s);
            best_for_ref[j] = std::max(best_for_ref[j], s);
        }
    }
    PRF out;
    for (double s : best_for_cand) out.precision += s;
    for (double s : best_for_ref) out.recall += s;
    out.precision /= static_cast<double>(cand.size());
    out.recall /= static_cast<double>(ref.size());
    out.f1 = harmonic_mean(out.precision, out.recall);
    return out;
}

inline PRF bertscore(std::string_view candidate, std::string_view reference, TokenEmbedder& embedder) {
    const auto c = embedder.tokens(candidate);
    const auto r = embedder.tokens(reference);
    if (c.empty() || r.empty()) throw Error("BERTScore needs non-empty candidate and reference");
    const auto cv = embedder.embed(c);
    const auto rv = embedder.embed(r);
    return bertscore_vectors(cv, rv);
}

inline double unanswered_rate(const std::vector<AnswerResult>& results) {
    if (results.empty()) throw Error("unanswered rate over zero questions");
    const auto declined = std::count_if(results.begin(), results.end(), [](const AnswerResult& a) { return !a.answered; });
    return 100.0 * static_cast<double>(declined) / static_cast<double>(results.size());
}

struct MetricRow {
    std::string question_id;
    QuestionType qtype = QuestionType::Known;
    std::optional<double> ndcg;  // absent for out-of-KB questions
    PRF rouge1;
    PRF bertscore;
    bool answered = false;
    bool errored = false;
};

struct TypeAggregate {
    std::size_t count = 0;    // questions of this type
    std::size_t errored = 0;  // excluded from generation means
    std::optional<double> ndcg;
    PRF rouge1;
    PRF bertscore;
    double unanswered = 0.0;  // percentage of non-errored questions declined
};

struct SystemReport {
    Pipeline pipeline = Pipeline::IB;
    int cutoff = 1;
    std::vector<MetricRow> rows;
    std::map<QuestionType, TypeAggregate> by_type;
    std::size_t failures = 0;

    std::string label() const {
        if (pipeline == Pipeline::IB) return std::string(to_string(pipeline));
        return std::string(to_string(pipeline)) + "@" + std::to_string(cutoff);
    }
};

inline SystemReport aggregate(std::vector<MetricRow> rows, Pipeline pipeline, int cutoff) {
    SystemReport report;
    report.pipeline = pipeline;
    report.cutoff = cutoff;
    for (auto t : kAllQuestionTypes) {
        TypeAggregate agg;
        double ndcg_sum = 0.0;
        std::size_t ndcg_n = 0, gen_n = 0, declined = 0;
        for (const auto& r : rows) {
            if (r.qtype != t) continue;
            ++agg.count;
            if (r.ndcg) {
                ndcg_sum += *r.ndcg;
                ++ndcg_n;
            }
            if (r.errored) {
                ++agg.errored;
                continue;
            }
            ++gen_n;
            if (!r.answered) ++declined;
            agg.rouge1.precision += r.rouge1.precision;
            agg.rouge1.recall += r.rouge1.recall;
            agg.rouge1.f1 += r.rouge1.f1;
            agg.bertscore.precision += r.bertscore.precision;
            agg.bertscore.recall += r.bertscore.recall;
            agg.bertscore.f1 += r.bertscore.f1;
        }
        if (agg.count == 0) continue;
        if (ndcg_n > 0) agg.ndcg = ndcg_sum / static_cast<double>(ndcg_n);
        if (gen_n > 0) {
            const double n = static_cast<double>(gen_n);
            for (auto* prf : {&agg.rouge1, &agg.bertscore}) {
                prf->precision /= n;
                prf->recall /= n;
                prf->f1 /= n;
            }
        }
        if (gen_n > 0) agg.unanswered = 100.0 * static_cast<double>(declined) / static_cast<double>(gen_n);
        report.failures += agg.errored;
        report.by_type[t] = agg;
    }
    report.rows = std::move(rows);
    return report;
}

}  // namespace faqrag
