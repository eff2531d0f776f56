#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bm25.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "http.hpp"
#include "intent.hpp"
#include "metrics.hpp"
#include "retriever.hpp"
#include "tokenizer.hpp"

namespace faqrag {

struct DenseConfig {
    std::string provider = "hashed";  // hashed | remote
    int dim = 256;
    std::optional<Similarity> similarity;  // defaults to the provider's convention
    std::optional<HttpEndpoint> endpoint;
    std::size_t batch_size = 64;
};

struct GeneratorConfig {
    std::string kind = "extractive";  // extractive | remote
    ExtractiveOptions extractive;
    std::optional<HttpEndpoint> endpoint;
    ChatOptions chat;
    std::vector<std::string> refusal_patterns = NaDetector::default_patterns();
};

struct BertScoreConfig {
    std::string embedder = "hashed";  // hashed | remote
    int dim = 256;
    std::optional<HttpEndpoint> endpoint;
};

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> static_dir;
    int default_cutoff = 3;
};

struct EngineConfig {
    CollectionPaths data;
    std::optional<std::filesystem::path> paraphrases;
    std::optional<std::filesystem::path> acronyms;
    std::string fallback_text{kFallbackAnswer};

    TokenizerConfig tokenizer;
    Bm25Params bm25;
    DenseConfig dense;
    IntentConfig intent;
    GeneratorConfig generator;
    std::optional<HttpEndpoint> llm;  // paraphrase generation; falls back to the generator endpoint

    std::vector<Pipeline> pipelines{Pipeline::IB, Pipeline::RagBm25, Pipeline::RagDense};
    std::set<int> cutoffs{1, 3, 5};
    double alpha = 0.01;
    int workers = 4;
    int max_in_flight = 4;
    GainScheme gain = GainScheme::Linear;
    BertScoreConfig bertscore;
    ServerConfig server;
};

namespace detail {

inline HttpEndpoint parse_endpoint(const json& j) {
    HttpEndpoint e;
    if (j.is_string()) {
        e.url = j.get<std::string>();
        return e;
    }
    e.url = j.at("url").get<std::string>();
    e.api_key_env = j.value("api_key_env", std::string{});
    e.timeout = std::chrono::seconds(j.value("timeout_s", 60));
    e.retry.max_attempts = j.value("max_attempts", e.retry.max_attempts);
    e.retry.initial_backoff = std::chrono::milliseconds(j.value("initial_backoff_ms", 200));
    e.retry.max_backoff = std::chrono::milliseconds(j.value("max_backoff_ms", 5000));
    return e;
}

inline json endpoint_to_json(const HttpEndpoint& e) {
    return {{"url", e.url},
            {"api_key_env", e.api_key_env},
            {"timeout_s", e.timeout.count()},
            {"max_attempts", e.retry.max_attempts},
            {"initial_backoff_ms", e.retry.initial_backoff.count()},
            {"max_backoff_ms", e.retry.max_backoff.count()}};
}

inline TokenizerConfig parse_tokenizer(const json& j) {
    TokenizerConfig t;
    t.lowercase = j.value("lowercase", true);
    if (auto it = j.find("stopwords"); it != j.end()) {
        if (it->is_string() && it->get<std::string>() == "english") {
            t.stopwords = english_stopwords();
        } else if (it->is_array()) {
            t.stopwords = it->get<std::set<std::string>>();
        } else if (!it->is_null() && !(it->is_boolean() && !it->get<bool>())) {
            throw Error("tokenizer.stopwords must be \"english\", a list, or null");
        }
    }
    const auto stem = j.value("stemmer", std::string("none"));
    if (stem == "porter") t.stemmer = Stemmer::Porter;
    else if (stem != "none") throw Error("unknown stemmer \"" + stem + "\"");
    return t;
}

inline json tokenizer_to_json(const TokenizerConfig& t) {
    json j = {{"lowercase", t.lowercase}, {"stemmer", t.stemmer == Stemmer::Porter ? "porter" : "none"}};
    j["stopwords"] = t.stopwords ? json(*t.stopwords) : json(nullptr);
    return j;
}

}  // namespace detail

inline std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

// Relative paths resolve against `base_dir` (the config file's directory).
inline EngineConfig parse_config(const json& j, const std::filesystem::path& base_dir = ".") {
    EngineConfig c;
    try {
        const auto& data = j.at("data");
        c.data.passages = resolve_path(base_dir, data.at("passages").get<std::string>());
        c.data.questions = resolve_path(base_dir, data.at("questions").get<std::string>());
        c.data.answers = resolve_path(base_dir, data.at("answers").get<std::string>());
        c.data.qrels = resolve_path(base_dir, data.at("qrels").get<std::string>());
        if (data.contains("paraphrases")) c.paraphrases = resolve_path(base_dir, data["paraphrases"].get<std::string>());
        if (data.contains("acronyms")) c.acronyms = resolve_path(base_dir, data["acronyms"].get<std::string>());

        c.fallback_text = j.value("fallback_text", c.fallback_text);
        if (j.contains("tokenizer")) c.tokenizer = detail::parse_tokenizer(j["tokenizer"]);
        if (j.contains("bm25")) {
            c.bm25.k1 = j["bm25"].value("k1", c.bm25.k1);
            c.bm25.b = j["bm25"].value("b", c.bm25.b);
        }
        if (c.bm25.k1 < 0.0 || c.bm25.b < 0.0 || c.bm25.b > 1.0) throw Error("bm25 needs k1 >= 0 and b in [0,1]");

        if (j.contains("dense")) {
            const auto& d = j["dense"];
            c.dense.provider = d.value("provider", c.dense.provider);
            c.dense.dim = d.value("dim", c.dense.dim);
            c.dense.batch_size = d.value("batch_size", c.dense.batch_size);
            if (d.contains("similarity")) c.dense.similarity = parse_similarity(d["similarity"].get<std::string>());
            if (d.contains("endpoint")) c.dense.endpoint = detail::parse_endpoint(d["endpoint"]);
        }
        if (j.contains("intent")) {
            const auto& i = j["intent"];
            c.intent.threshold = i.value("threshold", c.intent.threshold);
            c.intent.variations.keep = i.value("keep", c.intent.variations.keep);
            c.intent.variations.min_tokens = i.value("min_tokens", c.intent.variations.min_tokens);
            c.intent.variations.max_tokens = i.value("max_tokens", c.intent.variations.max_tokens);
        }
        if (j.contains("generator")) {
            const auto& g = j["generator"];
            c.generator.kind = g.value("kind", c.generator.kind);
            c.generator.extractive.min_top_score = g.value("theta", c.generator.extractive.min_top_score);
            c.generator.extractive.char_budget = g.value("char_budget", c.generator.extractive.char_budget);
            if (g.contains("endpoint")) c.generator.endpoint = detail::parse_endpoint(g["endpoint"]);
            c.generator.chat.temperature = g.value("temperature", c.generator.chat.temperature);
            c.generator.chat.max_tokens = g.value("max_tokens", c.generator.chat.max_tokens);
            c.generator.chat.model = g.value("model", c.generator.chat.model);
            if (g.contains("refusal_patterns"))
                c.generator.refusal_patterns = g["refusal_patterns"].get<std::vector<std::string>>();
        }
        if (j.contains("llm")) c.llm = detail::parse_endpoint(j["llm"]);

        if (j.contains("pipelines")) {
            c.pipelines.clear();
            for (const auto& p : j["pipelines"]) {
                auto parsed = parse_pipeline(p.get<std::string>());
                if (!parsed) throw Error("unknown pipeline \"" + p.get<std::string>() + "\"");
                c.pipelines.push_back(*parsed);
            }
        }
        if (j.contains("cutoffs")) c.cutoffs = j["cutoffs"].get<std::set<int>>();
        if (c.cutoffs.empty() || *c.cutoffs.begin() < 1) throw Error("cutoffs must be non-empty and each >= 1");
        c.alpha = j.value("alpha", c.alpha);
        c.workers = j.value("workers", c.workers);
        c.max_in_flight = j.value("max_in_flight", c.max_in_flight);

        if (j.contains("metrics")) {
            const auto& m = j["metrics"];
            const auto gain = m.value("gain", std::string("linear"));
            if (gain == "exponential") c.gain = GainScheme::Exponential;
            else if (gain != "linear") throw Error("metrics.gain must be linear or exponential");
            if (m.contains("bertscore")) {
                const auto& b = m["bertscore"];
                c.bertscore.embedder = b.value("embedder", c.bertscore.embedder);
                c.bertscore.dim = b.value("dim", c.bertscore.dim);
                if (b.contains("endpoint")) c.bertscore.endpoint = detail::parse_endpoint(b["endpoint"]);
            }
        }
        if (j.contains("server")) {
            const auto& s = j["server"];
            c.server.host = s.value("host", c.server.host);
            c.server.port = s.value("port", c.server.port);
            c.server.default_cutoff = s.value("default_cutoff", c.server.default_cutoff);
            if (s.contains("static_dir")) c.server.static_dir = resolve_path(base_dir, s["static_dir"].get<std::string>());
        }
    } catch (const json::exception& e) {
        throw Error(std::string("invalid config: ") + e.what());
    }
    c.intent.fallback_text = c.fallback_text;
    c.intent.tokenizer = {};
    return c;
}

inline EngineConfig load_config(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    return parse_config(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

// Snapshot written next to run artifacts. Paths are emitted as given so the snapshot is
// stable across checkouts.
inline json config_snapshot(const EngineConfig& c) {
    json pipelines = json::array();
    for (auto p : c.pipelines) pipelines.push_back(to_string(p));
    json j = {
        {"data",
         {{"passages", c.data.passages.filename().string()},
          {"questions", c.data.questions.filename().string()},
          {"answers", c.data.answers.filename().string()},
          {"qrels", c.data.qrels.filename().string()}}},
        {"fallback_text", c.fallback_text},
        {"tokenizer", detail::tokenizer_to_json(c.tokenizer)},
        {"bm25", {{"k1", c.bm25.k1}, {"b", c.bm25.b}}},
        {"dense", {{"provider", c.dense.provider}, {"dim", c.dense.dim}}},
        {"intent",
         {{"threshold", c.intent.threshold},
          {"keep", c.intent.variations.keep},
          {"min_tokens", c.intent.variations.min_tokens},
          {"max_tokens", c.intent.variations.max_tokens}}},
        {"generator",
         {{"kind", c.generator.kind},
          {"theta", c.generator.extractive.min_top_score},
          {"char_budget", c.generator.extractive.char_budget},
          {"temperature", c.generator.chat.temperature},
          {"max_tokens", c.generator.chat.max_tokens}}},
        {"pipelines", pipelines},
        {"cutoffs", c.cutoffs},
        {"alpha", c.alpha},
        {"metrics",
         {{"gain", c.gain == GainScheme::Linear ? "linear" : "exponential"},
          {"bertscore", {{"embedder", c.bertscore.embedder}, {"dim", c.bertscore.dim}}}}},
    };
    if (c.paraphrases) j["data"]["paraphrases"] = c.paraphrases->filename().string();
    if (c.acronyms) j["data"]["acronyms"] = c.acronyms->filename().string();
    if (c.dense.similarity) j["dense"]["similarity"] = to_string(*c.dense.similarity);
    if (c.dense.endpoint) j["dense"]["endpoint"] = detail::endpoint_to_json(*c.dense.endpoint);
    if (c.generator.endpoint) j["generator"]["endpoint"] = detail::endpoint_to_json(*c.generator.endpoint);
    if (!c.generator.chat.model.empty()) j["generator"]["model"] = c.generator.chat.model;
    return j;
}

}  // namespace faqrag
