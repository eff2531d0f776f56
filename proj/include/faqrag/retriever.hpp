#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "bm25.hpp"
#include "dense.hpp"
#include "ranking.hpp"

namespace faqrag {

enum class Pipeline { IB, RagBm25, RagDense };

inline std::string_view to_string(Pipeline p) {
    switch (p) {
        case Pipeline::IB: return "ib";
        case Pipeline::RagBm25: return "rag-bm25";
        case Pipeline::RagDense: return "rag-dense";
    }
    return "ib";
}

inline std::optional<Pipeline> parse_pipeline(std::string_view s) {
    if (s == "ib") return Pipeline::IB;
    if (s == "rag-bm25") return Pipeline::RagBm25;
    if (s == "rag-dense") return Pipeline::RagDense;
    return std::nullopt;
}

class Retriever {
public:
    virtual ~Retriever() = default;
    virtual Ranking retrieve(std::string_view query, int cutoff, std::string question_id) const = 0;
    virtual Pipeline pipeline() const = 0;
};

class Bm25Retriever : public Retriever {
public:
    Bm25Retriever(std::shared_ptr<const InvertedIndex> index, Bm25Params params = {})
        : index_(std::move(index)), params_(params) {}

    Ranking retrieve(std::string_view query, int cutoff, std::string question_id) const override {
        return bm25_search(*index_, query, cutoff, params_, std::move(question_id));
    }

    Pipeline pipeline() const override { return Pipeline::RagBm25; }
    const InvertedIndex& index() const noexcept { return *index_; }

private:
    std::shared_ptr<const InvertedIndex> index_;
    Bm25Params params_;
};

class DenseRetriever : public Retriever {
public:
    DenseRetriever(std::shared_ptr<const VectorStore> store, std::shared_ptr<EmbeddingProvider> provider)
        : store_(std::move(store)), provider_(std::move(provider)) {}

    Ranking retrieve(std::string_view query, int cutoff, std::string question_id) const override {
        return dense_search(*store_, *provider_, query, cutoff, std::move(question_id));
    }

    Pipeline pipeline() const override { return Pipeline::RagDense; }
    const VectorStore& store() const noexcept { return *store_; }

private:
    std::shared_ptr<const VectorStore> store_;
    std::shared_ptr<EmbeddingProvider> provider_;
};

}  // namespace faqrag
