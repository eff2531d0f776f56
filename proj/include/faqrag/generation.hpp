#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "http.hpp"
#include "ranking.hpp"
#include "retriever.hpp"

namespace faqrag {

inline constexpr std::string_view kAnswerInstruction =
    "Generate an answer to be synthesized with text-to-speech for a virtual assistant, the answer "
    "should be based on the retrieved documents for the following question. If the retrieved "
    "documents are not related to the question, then answer NA.";

struct Prompt {
    std::string text;
    std::string question_id;
    std::vector<std::string> passage_ids;
};

namespace detail {

inline std::string single_line(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool space = false;
    for (char c : trim(text)) {
        if (c == '\n' || c == '\r' || c == '\t') c = ' ';
        if (c == ' ') {
            if (space) continue;
            space = true;
        } else {
            space = false;
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace detail

// Instruction, then "Question: ...", then "Retrieved documents:" with one "- " line per
// passage in rank order.
inline Prompt build_prompt(const Question& question, const Ranking& ranking, const PassageCorpus& corpus) {
    Prompt p;
    p.question_id = question.id;
    p.text = std::string(kAnswerInstruction);
    p.text += "\nQuestion: " + detail::single_line(question.text) + "\nRetrieved documents:";
    for (const auto& e : ranking.entries) {
        const auto* passage = corpus.find(e.passage_id);
        if (!passage) throw Error("ranking for " + question.id + " cites unknown passage " + e.passage_id);
        p.text += "\n- " + detail::single_line(passage->text);
        p.passage_ids.push_back(e.passage_id);
    }
    return p;
}

// Plain text completion by a remote model.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
    virtual bool reachable() { return true; }
};

struct ChatOptions {
    double temperature = 0.0;
    int max_tokens = 256;
    std::string model;  // sent only when non-empty
};

// Chat-completions wire format: one user message in, choices[0].message.content out.
class RemoteChatClient : public LlmClient {
public:
    RemoteChatClient(std::shared_ptr<JsonTransport> transport, ChatOptions options = {})
        : transport_(std::move(transport)), options_(std::move(options)) {}

    json request_body(const std::string& prompt) const {
        json body = {{"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                     {"temperature", options_.temperature},
                     {"max_tokens", options_.max_tokens}};
        if (!options_.model.empty()) body["model"] = options_.model;
        return body;
    }

    std::string complete(const std::string& prompt) override {
        const json response = transport_->post(request_body(prompt));
        try {
            const auto& content = response.at("choices").at(0).at("message").at("content");
            return content.is_null() ? std::string{} : content.get<std::string>();
        } catch (const json::exception& e) {
            throw TransportError(transport_->describe() + ": malformed chat response: " + e.what());
        }
    }

    bool reachable() override { return transport_->reachable(); }

private:
    std::shared_ptr<JsonTransport> transport_;
    ChatOptions options_;
};

struct GenerationInput {
    const Prompt& prompt;
    const Ranking& ranking;
    const PassageCorpus& corpus;
};

class Generator {
public:
    virtual ~Generator() = default;
    virtual std::string generate(const GenerationInput& input) = 0;
    virtual std::string id() const = 0;
    virtual bool remote() const { return false; }
    virtual bool reachable() { return true; }
};

class RemoteGenerator : public Generator {
public:
    explicit RemoteGenerator(std::shared_ptr<LlmClient> client, std::string id = "remote-chat")
        : client_(std::move(client)), id_(std::move(id)) {}

    // Blank output counts as "NA".
    std::string generate(const GenerationInput& input) override {
        auto text = client_->complete(input.prompt.text);
        if (trim(text).empty()) return "NA";
        return text;
    }

    std::string id() const override { return id_; }
    bool remote() const override { return true; }
    bool reachable() override { return client_->reachable(); }

private:
    std::shared_ptr<LlmClient> client_;
    std::string id_;
};

struct ExtractiveOptions {
    double min_top_score = 0.0;  // theta; a top score below it yields "NA"
    std::size_t char_budget = 1200;
};

inline std::string truncate_utf8(std::string text, std::size_t budget) {
    if (text.size() <= budget) return text;
    std::size_t cut = budget;
    while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
    text.resize(cut);
    return text;
}

// Deterministic stand-in for a model: returns the retrieved passages themselves.
class ExtractiveGenerator : public Generator {
public:
    explicit ExtractiveGenerator(ExtractiveOptions options = {}) : options_(options) {}

    std::string generate(const GenerationInput& input) override {
        const auto& entries = input.ranking.entries;
        if (entries.empty() || entries.front().score < options_.min_top_score) return "NA";
        if (entries.size() == 1) return input.corpus.at(entries.front().passage_id).text;
        std::string joined;
        for (const auto& e : entries) {
            if (!joined.empty()) joined += ' ';
            joined += input.corpus.at(e.passage_id).text;
        }
        return truncate_utf8(std::move(joined), options_.char_budget);
    }

    std::string id() const override { return "extractive"; }
    const ExtractiveOptions& options() const noexcept { return options_; }

private:
    ExtractiveOptions options_;
};

class NaDetector {
public:
    NaDetector() : NaDetector(default_patterns()) {}

    explicit NaDetector(const std::vector<std::string>& refusal_patterns) {
        for (const auto& p : refusal_patterns)
            patterns_.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
    }

    static std::vector<std::string> default_patterns() {
        return {R"(^i'?m sorry,? i don'?t have an answer)"};
    }

    bool operator()(std::string_view raw) const {
        const auto text = trim(raw);
        if (text.size() >= 2 && std::toupper(static_cast<unsigned char>(text[0])) == 'N' &&
            std::toupper(static_cast<unsigned char>(text[1])) == 'A') {
            if (text.size() == 2) return true;
            if (std::ispunct(static_cast<unsigned char>(text[2]))) return true;
        }
        const std::string s(text);
        return std::any_of(patterns_.begin(), patterns_.end(),
                           [&](const std::regex& re) { return std::regex_search(s, re); });
    }

private:
    std::vector<std::regex> patterns_;
};

inline bool detect_na(std::string_view raw) {
    static const NaDetector detector;
    return detector(raw);
}

struct AnswerResult {
    std::string question_id;
    std::string text;
    bool answered = false;
    std::vector<std::string> source_passage_ids;
    Pipeline pipeline = Pipeline::IB;
    int cutoff = 1;
    std::optional<std::string> error;  // set when a remote call failed; excluded from generation metrics

    bool operator==(const AnswerResult&) const = default;
};

struct RagOptions {
    std::string fallback_text{kFallbackAnswer};
    std::set<int> cutoffs{1, 3, 5};
    NaDetector na_detector;
};

struct RagOutcome {
    AnswerResult answer;
    Ranking ranking;
    double retrieval_ms = 0.0;
    double generation_ms = 0.0;
};

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

inline RagOutcome answer_rag(const Retriever& retriever, Generator& generator, const PassageCorpus& corpus,
                             const Question& question, int cutoff, const RagOptions& options = {}) {
    if (!options.cutoffs.contains(cutoff))
        throw Error("cutoff " + std::to_string(cutoff) + " is not among the configured cutoffs");
    RagOutcome out;
    auto& a = out.answer;
    a.question_id = question.id;
    a.pipeline = retriever.pipeline();
    a.cutoff = cutoff;

    auto t0 = std::chrono::steady_clock::now();
    out.ranking = retriever.retrieve(question.text, cutoff, question.id);
    out.retrieval_ms = elapsed_ms(t0);

    if (out.ranking.empty()) {
        a.text = options.fallback_text;
        return out;
    }
    const auto prompt = build_prompt(question, out.ranking, corpus);
    t0 = std::chrono::steady_clock::now();
    const auto raw = generator.generate({prompt, out.ranking, corpus});
    out.generation_ms = elapsed_ms(t0);

    if (options.na_detector(raw) || trim(raw) == options.fallback_text) {
        a.text = options.fallback_text;
        return out;
    }
    a.text = raw;
    a.answered = true;
    a.source_passage_ids = out.ranking.passage_ids();
    return out;
}

}  // namespace faqrag
