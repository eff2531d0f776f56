#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "http.hpp"
#include "ranking.hpp"
#include "tokenizer.hpp"

namespace faqrag {

using Vector = std::vector<double>;

enum class Similarity { Dot, Cosine };

inline std::string_view to_string(Similarity s) { return s == Similarity::Dot ? "dot" : "cosine"; }

inline Similarity parse_similarity(std::string_view s) {
    if (s == "dot") return Similarity::Dot;
    if (s == "cosine") return Similarity::Cosine;
    throw Error("unknown similarity \"" + std::string(s) + "\"");
}

inline double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const Vector& v) { return std::sqrt(dot(v, v)); }

inline double cosine(const Vector& a, const Vector& b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    // One vector per text, in input order.
    virtual std::vector<Vector> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string id() const = 0;
    virtual Similarity default_similarity() const = 0;
};

// Hashed character trigrams of each token (with '#' boundary markers), counted into
// `dim` buckets by FNV-1a and L2-normalised. Text without tokens maps to the zero vector.
class HashedNGramProvider : public EmbeddingProvider {
public:
    explicit HashedNGramProvider(int dim = 256, TokenizerConfig tokenizer = {})
        : dim_(dim), tokenizer_(std::move(tokenizer)) {
        if (dim_ < 1) throw Error("embedding dimension must be positive");
    }

    std::vector<Vector> embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) throw Error("nothing to embed");
        std::vector<Vector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed_one(t));
        return out;
    }

    Vector embed_one(std::string_view text) const {
        Vector v(static_cast<std::size_t>(dim_), 0.0);
        for (const auto& token : tokenize(text, tokenizer_)) add_token(v, token);
        const double n = l2_norm(v);
        if (n > 0.0)
            for (auto& x : v) x /= n;
        return v;
    }

    // Un-normalised trigram counts for a single token.
    Vector token_counts(std::string_view token) const {
        Vector v(static_cast<std::size_t>(dim_), 0.0);
        add_token(v, token);
        return v;
    }

    int dim() const noexcept { return dim_; }
    std::string id() const override { return "hashed-ngram-" + std::to_string(dim_); }
    Similarity default_similarity() const override { return Similarity::Cosine; }

    static std::uint64_t fnv1a(std::string_view bytes) {
        std::uint64_t h = 14695981039346656037ull;
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

    // Character trigrams of "#token#", split on code point boundaries.
    static std::vector<std::string> trigrams(std::string_view token) {
        std::vector<std::string> chars{"#"};
        std::size_t pos = 0;
        while (pos < token.size()) {
            const std::size_t start = pos;
            detail::decode_utf8(token, pos);
            chars.emplace_back(token.substr(start, pos - start));
        }
        chars.emplace_back("#");
        std::vector<std::string> grams;
        for (std::size_t i = 0; i + 2 < chars.size(); ++i) grams.push_back(chars[i] + chars[i + 1] + chars[i + 2]);
        return grams;
    }

private:
    void add_token(Vector& v, std::string_view token) const {
        for (const auto& g : trigrams(token)) v[fnv1a(g) % static_cast<std::uint64_t>(dim_)] += 1.0;
    }

    int dim_;
    TokenizerConfig tokenizer_;
};

// Wire protocol: POST {"texts": [...]} -> {"vectors": [[...]], "dim": n}.
class RemoteEmbeddingProvider : public EmbeddingProvider {
public:
    RemoteEmbeddingProvider(std::shared_ptr<JsonTransport> transport, std::size_t batch_size = 64,
                            Similarity similarity = Similarity::Dot)
        : transport_(std::move(transport)), batch_size_(std::max<std::size_t>(batch_size, 1)),
          similarity_(similarity) {}

    std::vector<Vector> embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) throw Error("nothing to embed");
        std::vector<Vector> out;
        out.reserve(texts.size());
        for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
            const std::size_t end = std::min(texts.size(), start + batch_size_);
            std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                           texts.begin() + static_cast<std::ptrdiff_t>(end));
            auto vectors = parse_response(transport_->post(json{{"texts", batch}}), batch.size());
            for (auto& v : vectors) out.push_back(std::move(v));
        }
        return out;
    }

    std::string id() const override { return "remote:" + transport_->describe(); }
    Similarity default_similarity() const override { return similarity_; }
    int dim() const noexcept { return dim_; }

private:
    std::vector<Vector> parse_response(const json& response, std::size_t expected) {
        const auto where = transport_->describe();
        if (!response.is_object() || !response.contains("vectors") || !response["vectors"].is_array())
            throw Error(where + ": embedding response lacks a \"vectors\" array");
        const auto& vectors = response["vectors"];
        if (vectors.size() != expected)
            throw Error(where + ": expected " + std::to_string(expected) + " vectors, got " +
                        std::to_string(vectors.size()));
        int reported = -1;
        if (auto it = response.find("dim"); it != response.end() && it->is_number_integer())
            reported = it->get<int>();
        std::vector<Vector> out;
        for (const auto& row : vectors) {
            if (!row.is_array()) throw Error(where + ": vector is not an array");
            Vector v;
            v.reserve(row.size());
            for (const auto& x : row) {
                if (!x.is_number()) throw Error(where + ": vector holds a non-number");
                const double d = x.get<double>();
                if (!std::isfinite(d)) throw Error(where + ": vector holds a non-finite value");
                v.push_back(d);
            }
            const int d = static_cast<int>(v.size());
            if (reported >= 0 && d != reported)
                throw Error(where + ": dimension mismatch, declared " + std::to_string(reported) + " got " +
                            std::to_string(d));
            int unset = -1;
            dim_.compare_exchange_strong(unset, d);
            if (d != dim_.load())
                throw Error(where + ": dimension mismatch, expected " + std::to_string(dim_.load()) + " got " +
                            std::to_string(d));
            out.push_back(std::move(v));
        }
        return out;
    }

    std::shared_ptr<JsonTransport> transport_;
    std::size_t batch_size_;
    Similarity similarity_;
    std::atomic<int> dim_{-1};
};

class VectorStore {
public:
    static VectorStore build(const PassageCorpus& corpus, EmbeddingProvider& provider, Similarity similarity) {
        if (corpus.empty()) throw Error("cannot build a vector store over an empty corpus");
        std::vector<std::string> texts;
        VectorStore store;
        store.similarity_ = similarity;
        for (const auto& p : corpus) {
            store.ids_.push_back(p.id);
            texts.push_back(p.text);
        }
        store.vectors_ = provider.embed(texts);
        if (store.vectors_.size() != texts.size())
            throw Error("embedding provider returned " + std::to_string(store.vectors_.size()) + " vectors for " +
                        std::to_string(texts.size()) + " passages");
        store.dim_ = store.vectors_.front().size();
        for (const auto& v : store.vectors_) {
            if (v.size() != store.dim_) throw Error("embedding provider returned vectors of mixed dimension");
            store.norms_.push_back(l2_norm(v));
        }
        return store;
    }

    double score(const Vector& query, std::size_t i) const {
        const double d = dot(query, vectors_[i]);
        if (similarity_ == Similarity::Dot) return d;
        const double nq = l2_norm(query);
        if (nq == 0.0 || norms_[i] == 0.0) return 0.0;
        return d / (nq * norms_[i]);
    }

    std::size_t size() const noexcept { return ids_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    Similarity similarity() const noexcept { return similarity_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::vector<Vector>& vectors() const noexcept { return vectors_; }

private:
    std::vector<std::string> ids_;
    std::vector<Vector> vectors_;
    std::vector<double> norms_;
    std::size_t dim_ = 0;
    Similarity similarity_ = Similarity::Cosine;
};

// Exhaustive scan; ties go to the smaller passage id.
inline Ranking dense_search_vector(const VectorStore& store, const Vector& query, int cutoff,
                                   std::string question_id = {}) {
    if (cutoff < 1) throw Error("cutoff must be at least 1");
    if (!store.vectors().empty() && query.size() != store.dim())
        throw Error("query dimension " + std::to_string(query.size()) + " does not match store dimension " +
                    std::to_string(store.dim()));
    std::vector<RankedPassage> candidates;
    candidates.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) candidates.push_back({store.ids()[i], store.score(query, i)});
    Ranking r;
    r.question_id = std::move(question_id);
    r.cutoff = cutoff;
    r.entries = top_k(std::move(candidates), cutoff);
    return r;
}

inline Ranking dense_search(const VectorStore& store, EmbeddingProvider& provider, std::string_view query_text,
                            int cutoff, std::string question_id = {}) {
    auto query = provider.embed({std::string(query_text)});
    if (query.size() != 1) throw Error("embedding provider returned no query vector");
    return dense_search_vector(store, query.front(), cutoff, std::move(question_id));
}

}  // namespace faqrag
