#include <gtest/gtest.h>

#include "support.hpp"

using namespace faqrag;

namespace {

json minimal() {
    return {{"data", {{"passages", "p.jsonl"}, {"questions", "q.jsonl"}, {"answers", "a.jsonl"}, {"qrels", "qrels.txt"}}}};
}

}  // namespace

TEST(Config, DefaultsWhenOnlyDataIsGiven) {
    const auto c = parse_config(minimal(), "/base");
    EXPECT_EQ(c.data.passages, std::filesystem::path("/base/p.jsonl"));
    EXPECT_EQ(c.bm25.k1, 1.2);
    EXPECT_EQ(c.bm25.b, 0.75);
    EXPECT_EQ(c.cutoffs, (std::set<int>{1, 3, 5}));
    EXPECT_EQ(c.alpha, 0.01);
    EXPECT_EQ(c.pipelines.size(), 3u);
    EXPECT_EQ(c.intent.threshold, 0.35);
    EXPECT_EQ(c.generator.kind, "extractive");
    EXPECT_EQ(c.generator.extractive.char_budget, 1200u);
    EXPECT_EQ(c.gain, GainScheme::Linear);
    EXPECT_EQ(c.fallback_text, "I'm sorry, I don't have an answer.");
    EXPECT_FALSE(c.tokenizer.stopwords.has_value());
    EXPECT_EQ(c.tokenizer.stemmer, Stemmer::None);
}

TEST(Config, ShippedConfigLoads) {
    const auto c = testing_support::testbed_config();
    EXPECT_TRUE(std::filesystem::exists(c.data.passages));
    ASSERT_TRUE(c.paraphrases.has_value());
    EXPECT_TRUE(std::filesystem::exists(*c.paraphrases));
    EXPECT_EQ(c.server.default_cutoff, 3);
    EXPECT_EQ(c.dense.provider, "hashed");
}

TEST(Config, ParsesOverridesAndEndpoints) {
    auto j = minimal();
    j["tokenizer"] = {{"stopwords", "english"}, {"stemmer", "porter"}};
    j["bm25"] = {{"k1", 0.9}, {"b", 0.4}};
    j["pipelines"] = {"rag-bm25"};
    j["cutoffs"] = {2, 4};
    j["generator"] = {{"kind", "remote"}, {"endpoint", {{"url", "http://h/v1"}, {"max_attempts", 2}}}, {"model", "m"}};
    j["dense"] = {{"provider", "remote"}, {"endpoint", "http://e/embed"}, {"similarity", "cosine"}};
    j["metrics"] = {{"gain", "exponential"}};
    const auto c = parse_config(j);
    EXPECT_TRUE(c.tokenizer.stopwords->contains("the"));
    EXPECT_EQ(c.tokenizer.stemmer, Stemmer::Porter);
    EXPECT_EQ(c.bm25.k1, 0.9);
    EXPECT_EQ(c.pipelines, (std::vector<Pipeline>{Pipeline::RagBm25}));
    EXPECT_EQ(c.cutoffs, (std::set<int>{2, 4}));
    EXPECT_EQ(c.generator.endpoint->url, "http://h/v1");
    EXPECT_EQ(c.generator.endpoint->retry.max_attempts, 2);
    EXPECT_EQ(c.generator.chat.model, "m");
    EXPECT_EQ(c.dense.endpoint->url, "http://e/embed");
    EXPECT_EQ(*c.dense.similarity, Similarity::Cosine);
    EXPECT_EQ(c.gain, GainScheme::Exponential);
}

TEST(Config, RejectsInvalidValues) {
    auto bad_b = minimal();
    bad_b["bm25"] = {{"b", 1.5}};
    EXPECT_THROW(parse_config(bad_b), Error);
    auto bad_pipeline = minimal();
    bad_pipeline["pipelines"] = {"bm42"};
    EXPECT_THROW(parse_config(bad_pipeline), Error);
    auto bad_cutoff = minimal();
    bad_cutoff["cutoffs"] = {0, 3};
    EXPECT_THROW(parse_config(bad_cutoff), Error);
    auto bad_stemmer = minimal();
    bad_stemmer["tokenizer"] = {{"stemmer", "snowball"}};
    EXPECT_THROW(parse_config(bad_stemmer), Error);
    EXPECT_THROW(parse_config(json::object()), Error);
}

TEST(Config, SnapshotIsStableAndParsesBack) {
    const auto c = testing_support::testbed_config();
    const auto snap = config_snapshot(c);
    EXPECT_EQ(snap["data"]["passages"], "passages.jsonl");
    EXPECT_EQ(snap, config_snapshot(testing_support::testbed_config()));
    const auto again = parse_config(snap, testing_support::data_dir());
    EXPECT_EQ(again.data.passages, c.data.passages);
    EXPECT_EQ(again.cutoffs, c.cutoffs);
    EXPECT_EQ(again.intent.threshold, c.intent.threshold);
}

TEST(Config, MissingFileAndBadJson) {
    EXPECT_THROW(load_config("/nonexistent/config.json"), Error);
    testing_support::TempDir dir;
    std::ofstream(dir / "c.json") << "{";
    EXPECT_THROW(load_config(dir / "c.json"), ParseError);
}

TEST(Engine, BuildsFromShippedConfig) {
    const auto engine = Engine::create(testing_support::testbed_config());
    EXPECT_EQ(engine->index().doc_count(), 120u);
    EXPECT_EQ(engine->store().size(), 120u);
    EXPECT_EQ(engine->intent_model().intents().size(), 28u);
    EXPECT_EQ(engine->generator().id(), "extractive");
    EXPECT_FALSE(engine->generator().remote());
    EXPECT_EQ(engine->llm(), nullptr);
    EXPECT_THROW(engine->retriever(Pipeline::IB), Error);
}

TEST(Engine, RemoteProvidersNeedEndpoints) {
    auto c = testing_support::testbed_config();
    c.dense.provider = "remote";
    EXPECT_THROW(Engine::create(c), Error);
    c = testing_support::testbed_config();
    c.generator.kind = "remote";
    EXPECT_THROW(Engine::create(c), Error);
    c = testing_support::testbed_config();
    c.dense.provider = "word2vec";
    EXPECT_THROW(Engine::create(c), Error);
}
