#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "ranking.hpp"
#include "tokenizer.hpp"

namespace faqrag {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct Posting {
    std::size_t doc = 0;  // position in InvertedIndex::doc_ids()
    int tf = 0;
};

// Documents are numbered in ascending passage-id order, so every postings list is
// sorted by passage id.
class InvertedIndex {
public:
    static InvertedIndex build(const PassageCorpus& corpus, const TokenizerConfig& config = {}) {
        if (corpus.empty()) throw Error("cannot index an empty corpus");
        InvertedIndex index;
        index.config_ = config;
        std::vector<const Passage*> sorted;
        for (const auto& p : corpus) sorted.push_back(&p);
        std::sort(sorted.begin(), sorted.end(), [](const Passage* a, const Passage* b) { return a->id < b->id; });

        for (const auto* p : sorted) {
            const std::size_t doc = index.doc_ids_.size();
            index.doc_ids_.push_back(p->id);
            index.doc_lookup_.emplace(p->id, doc);
            const auto tokens = tokenize(p->text, config);
            index.doc_lengths_.push_back(static_cast<int>(tokens.size()));
            std::unordered_map<std::string, int> tf;
            for (const auto& t : tokens) ++tf[t];
            for (auto& [term, count] : tf) index.postings_[term].push_back({doc, count});
        }
        for (auto& [term, list] : index.postings_)
            std::sort(list.begin(), list.end(), [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
        const double total = std::accumulate(index.doc_lengths_.begin(), index.doc_lengths_.end(), 0.0);
        index.avg_doc_length_ = total / static_cast<double>(index.doc_lengths_.size());
        return index;
    }

    std::size_t doc_count() const noexcept { return doc_ids_.size(); }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    const TokenizerConfig& tokenizer() const noexcept { return config_; }
    const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
    const std::vector<int>& doc_lengths() const noexcept { return doc_lengths_; }
    std::size_t term_count() const noexcept { return postings_.size(); }

    int doc_length(std::string_view passage_id) const { return doc_lengths_[doc_of(passage_id)]; }

    std::size_t doc_of(std::string_view passage_id) const {
        auto it = doc_lookup_.find(std::string(passage_id));
        if (it == doc_lookup_.end()) throw Error("passage \"" + std::string(passage_id) + "\" is not indexed");
        return it->second;
    }

    const std::vector<Posting>* postings(std::string_view term) const {
        auto it = postings_.find(std::string(term));
        return it == postings_.end() ? nullptr : &it->second;
    }

    std::size_t df(std::string_view term) const {
        const auto* p = postings(term);
        return p ? p->size() : 0;
    }

    int tf(std::string_view term, std::size_t doc) const {
        const auto* list = postings(term);
        if (!list) return 0;
        auto it = std::lower_bound(list->begin(), list->end(), doc,
                                   [](const Posting& p, std::size_t d) { return p.doc < d; });
        return (it != list->end() && it->doc == doc) ? it->tf : 0;
    }

    // ln(1 + (N - df + 0.5) / (df + 0.5)); stays positive even when df > N/2.
    double idf(std::string_view term) const {
        const double n = static_cast<double>(doc_count());
        const double d = static_cast<double>(df(term));
        return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
    }

private:
    TokenizerConfig config_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<std::string> doc_ids_;
    std::unordered_map<std::string, std::size_t> doc_lookup_;
    std::vector<int> doc_lengths_;
    double avg_doc_length_ = 0.0;
};

namespace detail {

inline double bm25_term_weight(double idf, int tf, int doc_len, double avg_len, const Bm25Params& params) {
    if (tf == 0) return 0.0;
    const double norm = params.k1 * (1.0 - params.b + params.b * doc_len / avg_len);
    return idf * tf * (params.k1 + 1.0) / (tf + norm);
}

}  // namespace detail

// Repeated query tokens contribute once per occurrence.
inline double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                         std::string_view passage_id, const Bm25Params& params = {}) {
    const std::size_t doc = index.doc_of(passage_id);
    const int len = index.doc_lengths()[doc];
    double score = 0.0;
    for (const auto& term : query_tokens)
        score += detail::bm25_term_weight(index.idf(term), index.tf(term, doc), len, index.avg_doc_length(), params);
    return score;
}

// Passages matching no query term are left out, so the result can be empty.
inline Ranking bm25_search(const InvertedIndex& index, std::string_view query_text, int cutoff,
                           const Bm25Params& params = {}, std::string question_id = {}) {
    if (cutoff < 1) throw Error("cutoff must be at least 1");
    const auto tokens = tokenize(query_text, index.tokenizer());
    std::vector<double> acc(index.doc_count(), 0.0);
    std::vector<bool> hit(index.doc_count(), false);
    for (const auto& term : tokens) {
        const auto* list = index.postings(term);
        if (!list) continue;
        const double idf = index.idf(term);
        for (const auto& p : *list) {
            acc[p.doc] += detail::bm25_term_weight(idf, p.tf, index.doc_lengths()[p.doc], index.avg_doc_length(),
                                                   params);
            hit[p.doc] = true;
        }
    }
    std::vector<RankedPassage> candidates;
    for (std::size_t d = 0; d < acc.size(); ++d)
        if (hit[d] && acc[d] > 0.0) candidates.push_back({index.doc_ids()[d], acc[d]});
    Ranking r;
    r.question_id = std::move(question_id);
    r.cutoff = cutoff;
    r.entries = top_k(std::move(candidates), cutoff);
    return r;
}

}  // namespace faqrag
