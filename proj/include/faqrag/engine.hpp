#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "bm25.hpp"
#include "config.hpp"
#include "corpus.hpp"
#include "dense.hpp"
#include "generation.hpp"
#include "http.hpp"
#include "intent.hpp"
#include "metrics.hpp"
#include "retriever.hpp"

namespace faqrag {

// Optional replacements for the components the config would otherwise construct.
struct EngineOverrides {
    std::shared_ptr<Generator> generator;
    std::shared_ptr<EmbeddingProvider> embedder;
    std::shared_ptr<LlmClient> llm;
};

struct PipelineOutcome {
    AnswerResult answer;
    Ranking ranking;
    double retrieval_ms = 0.0;
    double generation_ms = 0.0;
};

// Everything needed to answer a question with either pipeline. Immutable once built,
// except for the remote clients it owns, which are themselves thread-safe.
class Engine {
public:
    static std::shared_ptr<Engine> create(EngineConfig config, EngineOverrides overrides = {}) {
        ValidationReport report;
        auto collection = load_test_collection(config.data, &report, {config.fallback_text});
        if (!report.ok()) throw ValidationError("test collection failed validation:\n" + report.summary());
        return create(std::move(config), std::move(collection), std::move(overrides));
    }

    static std::shared_ptr<Engine> create(EngineConfig config, TestCollection collection,
                                          EngineOverrides overrides = {}) {
        return std::shared_ptr<Engine>(new Engine(std::move(config), std::move(collection), std::move(overrides)));
    }

    const EngineConfig& config() const noexcept { return config_; }
    const TestCollection& collection() const noexcept { return collection_; }
    const InvertedIndex& index() const noexcept { return *index_; }
    const VectorStore& store() const noexcept { return *store_; }
    const IntentModel& intent_model() const noexcept { return *intent_model_; }
    Generator& generator() const noexcept { return *generator_; }
    EmbeddingProvider& embedder() const noexcept { return *embedder_; }
    const std::shared_ptr<InFlightLimiter>& limiter() const noexcept { return limiter_; }

    // Client for paraphrase generation; null when no endpoint is configured.
    std::shared_ptr<LlmClient> llm() const { return llm_; }

    const Retriever& retriever(Pipeline p) const {
        if (p == Pipeline::RagBm25) return *bm25_;
        if (p == Pipeline::RagDense) return *dense_;
        throw Error("the intent-based pipeline has no retriever");
    }

    PipelineOutcome answer(Pipeline pipeline, const Question& question, int cutoff) const {
        PipelineOutcome out;
        if (pipeline == Pipeline::IB) {
            const auto t0 = std::chrono::steady_clock::now();
            auto ib = answer_ib(*intent_model_, question);
            out.retrieval_ms = elapsed_ms(t0);
            out.answer = std::move(ib.answer);
            out.ranking = std::move(ib.ranking);
            return out;
        }
        auto rag = answer_rag(retriever(pipeline), *generator_, collection_.passages, question, cutoff, rag_options_);
        out.answer = std::move(rag.answer);
        out.ranking = std::move(rag.ranking);
        out.retrieval_ms = rag.retrieval_ms;
        out.generation_ms = rag.generation_ms;
        return out;
    }

    std::unique_ptr<TokenEmbedder> make_token_embedder() const {
        if (config_.bertscore.embedder == "hashed") return std::make_unique<HashedTokenEmbedder>(config_.bertscore.dim);
        if (config_.bertscore.embedder == "remote") {
            if (!config_.bertscore.endpoint) throw Error("metrics.bertscore.endpoint is required for a remote embedder");
            auto transport = std::make_shared<HttpJsonTransport>(*config_.bertscore.endpoint, limiter_);
            return std::make_unique<ProviderTokenEmbedder>(std::make_shared<RemoteEmbeddingProvider>(transport));
        }
        throw Error("unknown bertscore embedder \"" + config_.bertscore.embedder + "\"");
    }

private:
    Engine(EngineConfig config, TestCollection collection, EngineOverrides overrides)
        : config_(std::move(config)), collection_(std::move(collection)),
          limiter_(std::make_shared<InFlightLimiter>(config_.max_in_flight)) {
        if (config_.acronyms) config_.intent.acronyms = load_acronyms(*config_.acronyms);
        config_.intent.fallback_text = config_.fallback_text;

        index_ = std::make_shared<const InvertedIndex>(InvertedIndex::build(collection_.passages, config_.tokenizer));
        bm25_ = std::make_unique<Bm25Retriever>(index_, config_.bm25);

        embedder_ = overrides.embedder ? overrides.embedder : make_embedder();
        const auto similarity = config_.dense.similarity.value_or(embedder_->default_similarity());
        store_ = std::make_shared<const VectorStore>(VectorStore::build(collection_.passages, *embedder_, similarity));
        dense_ = std::make_unique<DenseRetriever>(store_, embedder_);

        VariationSet variations;
        if (config_.paraphrases) variations = load_variations(*config_.paraphrases);
        intent_model_ = std::make_unique<IntentModel>(build_intent_model(collection_, variations, config_.intent));

        generator_ = overrides.generator ? overrides.generator : make_generator();
        llm_ = overrides.llm;
        if (!llm_) {
            auto endpoint = config_.llm ? config_.llm : config_.generator.endpoint;
            if (endpoint)
                llm_ = std::make_shared<RemoteChatClient>(std::make_shared<HttpJsonTransport>(*endpoint, limiter_),
                                                          config_.generator.chat);
        }

        rag_options_.fallback_text = config_.fallback_text;
        rag_options_.cutoffs = config_.cutoffs;
        rag_options_.na_detector = NaDetector(config_.generator.refusal_patterns);
    }

    std::shared_ptr<EmbeddingProvider> make_embedder() const {
        if (config_.dense.provider == "hashed") return std::make_shared<HashedNGramProvider>(config_.dense.dim);
        if (config_.dense.provider == "remote") {
            if (!config_.dense.endpoint) throw Error("dense.endpoint is required for the remote provider");
            auto transport = std::make_shared<HttpJsonTransport>(*config_.dense.endpoint, limiter_);
            return std::make_shared<RemoteEmbeddingProvider>(transport, config_.dense.batch_size, Similarity::Dot);
        }
        throw Error("unknown dense provider \"" + config_.dense.provider + "\"");
    }

    std::shared_ptr<Generator> make_generator() const {
        if (config_.generator.kind == "extractive")
            return std::make_shared<ExtractiveGenerator>(config_.generator.extractive);
        if (config_.generator.kind == "remote") {
            if (!config_.generator.endpoint) throw Error("generator.endpoint is required for the remote generator");
            auto transport = std::make_shared<HttpJsonTransport>(*config_.generator.endpoint, limiter_);
            return std::make_shared<RemoteGenerator>(std::make_shared<RemoteChatClient>(transport, config_.generator.chat));
        }
        throw Error("unknown generator kind \"" + config_.generator.kind + "\"");
    }

    EngineConfig config_;
    TestCollection collection_;
    std::shared_ptr<InFlightLimiter> limiter_;
    std::shared_ptr<const InvertedIndex> index_;
    std::unique_ptr<Bm25Retriever> bm25_;
    std::shared_ptr<EmbeddingProvider> embedder_;
    std::shared_ptr<const VectorStore> store_;
    std::unique_ptr<DenseRetriever> dense_;
    std::unique_ptr<IntentModel> intent_model_;
    std::shared_ptr<Generator> generator_;
    std::shared_ptr<LlmClient> llm_;
    RagOptions rag_options_;
};

}  // namespace faqrag
