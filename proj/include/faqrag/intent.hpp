#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "generation.hpp"
#include "ranking.hpp"
#include "tokenizer.hpp"

namespace faqrag {

using AcronymMap = std::map<std::string, std::string, std::less<>>;

// Replaces whole-word, case-sensitive occurrences of each key. Idempotent as long as
// no expansion contains a key as a whole word.
inline std::string normalize_acronyms(std::string_view text, const AcronymMap& acronyms) {
    if (acronyms.empty()) return std::string(text);
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    std::size_t word_start = std::string_view::npos;
    const auto flush_word = [&](std::size_t end) {
        if (word_start == std::string_view::npos) return;
        const auto word = text.substr(word_start, end - word_start);
        auto it = acronyms.find(word);
        out += it == acronyms.end() ? std::string(word) : it->second;
        word_start = std::string_view::npos;
    };
    while (pos < text.size()) {
        const std::size_t start = pos;
        const char32_t cp = detail::decode_utf8(text, pos);
        if (detail::is_word_char(cp)) {
            if (word_start == std::string_view::npos) word_start = start;
        } else {
            flush_word(start);
            out.append(text.substr(start, pos - start));
        }
    }
    flush_word(text.size());
    return out;
}

inline AcronymMap load_acronyms(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    if (!j.is_object()) throw ParseError(path.string(), 0, "acronym map must be a JSON object");
    AcronymMap map;
    for (auto& [k, v] : j.items()) {
        if (!v.is_string()) throw ParseError(path.string(), 0, "expansion for " + k + " must be a string");
        map.emplace(k, v.get<std::string>());
    }
    return map;
}

namespace detail {

inline std::string number_word(int n) {
    static const char* words[] = {"zero", "one", "two", "three", "four", "five",
                                  "six",  "seven", "eight", "nine", "ten"};
    return (n >= 0 && n <= 10) ? words[n] : std::to_string(n);
}

// Lowercased, whitespace-collapsed form used for duplicate detection.
inline std::string fold(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : trim(s)) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

inline std::string strip_list_marker(std::string_view line) {
    static const std::regex marker(R"(^\s*(?:[-*+]|\(?\d{1,2}[.):\]])\s*)");
    std::string s(trim(line));
    s = std::regex_replace(s, marker, "", std::regex_constants::format_first_only);
    auto view = trim(s);
    if (view.size() >= 2 && ((view.front() == '"' && view.back() == '"') || (view.front() == '\'' && view.back() == '\''))) {
        view.remove_prefix(1);
        view.remove_suffix(1);
    }
    return std::string(trim(view));
}

}  // namespace detail

inline std::string paraphrase_prompt(std::string_view question, int max_n = 8) {
    return "generate up to " + detail::number_word(max_n) + " paraphrases of the following question: " +
           std::string(question);
}

// One variation per output line; list markers and quotes are stripped, case-folded
// duplicates and restatements of the input are dropped.
inline std::vector<std::string> parse_paraphrases(std::string_view output, std::string_view question, int max_n = 8) {
    std::vector<std::string> out;
    std::set<std::string> seen{detail::fold(question)};
    std::size_t start = 0;
    while (start <= output.size() && static_cast<int>(out.size()) < max_n) {
        auto end = output.find('\n', start);
        if (end == std::string_view::npos) end = output.size();
        auto line = detail::strip_list_marker(output.substr(start, end - start));
        if (!line.empty() && seen.insert(detail::fold(line)).second) out.push_back(std::move(line));
        start = end + 1;
    }
    return out;
}

inline std::vector<std::string> generate_paraphrases(LlmClient& client, std::string_view question, int max_n = 8) {
    return parse_paraphrases(client.complete(paraphrase_prompt(question, max_n)), question, max_n);
}

struct VariationFilter {
    std::size_t keep = 5;
    std::size_t min_tokens = 3;
    std::size_t max_tokens = 40;
};

// First `keep` variations, in generation order, that pass the length bounds and do not
// restate the canonical question once acronyms are expanded.
inline std::vector<std::string> select_variations(const std::vector<std::string>& variations,
                                                  std::string_view canonical, const AcronymMap& acronyms = {},
                                                  const VariationFilter& filter = {}) {
    const auto canonical_tokens = tokenize(normalize_acronyms(canonical, acronyms));
    std::vector<std::string> kept;
    for (const auto& v : variations) {
        if (kept.size() >= filter.keep) break;
        const auto tokens = tokenize(normalize_acronyms(v, acronyms));
        if (tokens.size() < filter.min_tokens || tokens.size() > filter.max_tokens) continue;
        if (tokens == canonical_tokens) continue;
        kept.push_back(v);
    }
    return kept;
}

struct Intent {
    std::string id;
    std::vector<std::string> training_utterances;
    std::string response_text;
    std::string response_passage_id;

    bool operator==(const Intent&) const = default;
};

struct IntentConfig {
    double threshold = 0.35;
    VariationFilter variations;
    AcronymMap acronyms;
    TokenizerConfig tokenizer;
    std::string fallback_text{kFallbackAnswer};
};

struct IntentDecision {
    std::optional<std::string> matched;
    double confidence = 0.0;
};

// Cosine similarity over TF-IDF unigram vectors. Document frequencies come from the
// training utterances; idf(t) = ln((1 + N) / (1 + df)) + 1, so unseen query terms carry
// the largest weight and pull confidence down.
class IntentModel {
public:
    IntentModel(std::vector<Intent> intents, IntentConfig config) : intents_(std::move(intents)), config_(std::move(config)) {
        if (intents_.empty()) throw Error("an intent model needs at least one intent");
        if (config_.threshold < 0.0 || config_.threshold > 1.0) throw Error("intent threshold must lie in [0,1]");
        std::sort(intents_.begin(), intents_.end(), [](const Intent& a, const Intent& b) { return a.id < b.id; });
        for (std::size_t i = 1; i < intents_.size(); ++i)
            if (intents_[i].id == intents_[i - 1].id) throw Error("duplicate intent id " + intents_[i].id);

        std::vector<std::vector<std::string>> docs;
        for (std::size_t i = 0; i < intents_.size(); ++i) {
            if (intents_[i].training_utterances.empty()) throw Error("intent " + intents_[i].id + " has no utterances");
            for (const auto& u : intents_[i].training_utterances) {
                docs.push_back(tokens_of(u));
                owner_.push_back(i);
            }
        }
        for (const auto& d : docs)
            for (const auto& t : std::set<std::string>(d.begin(), d.end())) ++df_[t];
        n_docs_ = static_cast<double>(docs.size());
        for (const auto& d : docs) vectors_.push_back(weigh(d));
    }

    IntentDecision classify(std::string_view utterance) const {
        const auto query = weigh(tokens_of(utterance));
        IntentDecision decision;
        std::optional<std::size_t> best;
        for (std::size_t u = 0; u < vectors_.size(); ++u) {
            const double sim = similarity(query, vectors_[u]);
            if (!best || sim > decision.confidence || (sim == decision.confidence && owner_[u] < *best)) {
                decision.confidence = sim;
                best = owner_[u];
            }
        }
        if (best && decision.confidence >= config_.threshold) decision.matched = intents_[*best].id;
        return decision;
    }

    const Intent* find(std::string_view id) const {
        auto it = std::lower_bound(intents_.begin(), intents_.end(), id,
                                   [](const Intent& i, std::string_view key) { return i.id < key; });
        return (it != intents_.end() && it->id == id) ? &*it : nullptr;
    }

    const std::vector<Intent>& intents() const noexcept { return intents_; }
    const IntentConfig& config() const noexcept { return config_; }
    double threshold() const noexcept { return config_.threshold; }

private:
    struct SparseVector {
        std::vector<std::pair<std::string, double>> weights;  // sorted by term
        double norm = 0.0;
    };

    std::vector<std::string> tokens_of(std::string_view text) const {
        return tokenize(normalize_acronyms(text, config_.acronyms), config_.tokenizer);
    }

    SparseVector weigh(const std::vector<std::string>& tokens) const {
        std::map<std::string, int> tf;
        for (const auto& t : tokens) ++tf[t];
        SparseVector v;
        double sq = 0.0;
        for (const auto& [term, count] : tf) {
            auto it = df_.find(term);
            const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
            const double w = count * (std::log((1.0 + n_docs_) / (1.0 + df)) + 1.0);
            v.weights.emplace_back(term, w);
            sq += w * w;
        }
        v.norm = std::sqrt(sq);
        return v;
    }

    static double similarity(const SparseVector& a, const SparseVector& b) {
        if (a.norm == 0.0 || b.norm == 0.0) return 0.0;
        if (a.weights == b.weights) return 1.0;
        double d = 0.0;
        auto i = a.weights.begin();
        auto j = b.weights.begin();
        while (i != a.weights.end() && j != b.weights.end()) {
            if (i->first < j->first) {
                ++i;
            } else if (j->first < i->first) {
                ++j;
            } else {
                d += i->second * j->second;
                ++i;
                ++j;
            }
        }
        return std::clamp(d / (a.norm * b.norm), 0.0, 1.0);
    }

    std::vector<Intent> intents_;
    IntentConfig config_;
    std::unordered_map<std::string, int> df_;
    double n_docs_ = 0.0;
    std::vector<SparseVector> vectors_;
    std::vector<std::size_t> owner_;
};

// topic id -> generated variations for that topic's canonical question.
using VariationSet = std::map<std::string, std::vector<std::string>>;

// One intent per Known topic. The first question of a topic in collection order is its
// canonical FAQ question; it is kept as-is alongside the selected variations, and every
// utterance is acronym-normalised.
inline IntentModel build_intent_model(const TestCollection& collection, const VariationSet& variations,
                                      const IntentConfig& config = {}) {
    std::vector<Intent> intents;
    std::set<std::string> seen;
    for (const auto& q : collection.questions) {
        if (q.qtype != QuestionType::Known || !seen.insert(q.topic).second) continue;
        auto answer = collection.gold_answers.find(q.gold_answer_id);
        if (answer == collection.gold_answers.end())
            throw Error("topic " + q.topic + " has no gold answer (" + q.gold_answer_id + ")");
        if (answer->second.source_passage_ids.empty())
            throw Error("topic " + q.topic + " gold answer cites no passage");
        Intent intent;
        intent.id = q.topic;
        intent.response_text = answer->second.text;
        intent.response_passage_id = answer->second.source_passage_ids.front();
        intent.training_utterances.push_back(normalize_acronyms(q.text, config.acronyms));
        if (auto it = variations.find(q.topic); it != variations.end())
            for (const auto& v : select_variations(it->second, q.text, config.acronyms, config.variations))
                intent.training_utterances.push_back(normalize_acronyms(v, config.acronyms));
        intents.push_back(std::move(intent));
    }
    if (intents.empty()) throw Error("collection has no known-answer topics to turn into intents");
    return IntentModel(std::move(intents), config);
}

struct IbOutcome {
    AnswerResult answer;
    Ranking ranking;
    IntentDecision decision;
};

inline IbOutcome answer_ib(const IntentModel& model, const Question& question) {
    IbOutcome out;
    out.decision = model.classify(question.text);
    out.ranking.question_id = question.id;
    out.ranking.cutoff = 1;
    auto& a = out.answer;
    a.question_id = question.id;
    a.pipeline = Pipeline::IB;
    a.cutoff = 1;
    if (!out.decision.matched) {
        a.text = model.config().fallback_text;
        return out;
    }
    const Intent* intent = model.find(*out.decision.matched);
    a.text = intent->response_text;
    a.answered = true;
    a.source_passage_ids = {intent->response_passage_id};
    out.ranking.entries.push_back({intent->response_passage_id, out.decision.confidence});
    return out;
}

inline void save_intent_model(const IntentModel& model, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    for (const auto& i : model.intents()) {
        json r = {{"id", i.id},
                  {"utterances", i.training_utterances},
                  {"response_text", i.response_text},
                  {"response_passage_id", i.response_passage_id}};
        out << r.dump() << "\n";
    }
}

inline IntentModel load_intent_model(const std::filesystem::path& path, const IntentConfig& config = {}) {
    std::vector<Intent> intents;
    const auto source = path.string();
    detail::for_each_json_line(path, [&](const json& r, std::size_t line) {
        Intent i;
        i.id = detail::required_string(r, "id", source, line);
        i.training_utterances = detail::string_list(r, "utterances", source, line);
        i.response_text = detail::required_string(r, "response_text", source, line);
        i.response_passage_id = detail::required_string(r, "response_passage_id", source, line);
        intents.push_back(std::move(i));
    });
    return IntentModel(std::move(intents), config);
}

// Paraphrase file: one JSON object per line {"topic", "question", "variations": [str]}.
inline VariationSet load_variations(const std::filesystem::path& path) {
    VariationSet out;
    const auto source = path.string();
    detail::for_each_json_line(path, [&](const json& r, std::size_t line) {
        auto topic = detail::required_string(r, "topic", source, line);
        auto list = detail::string_list(r, "variations", source, line);
        auto& slot = out[topic];
        slot.insert(slot.end(), list.begin(), list.end());
    });
    return out;
}

struct VariationRecord {
    std::string topic;
    std::string question;
    std::vector<std::string> variations;
};

inline void save_variations(const std::vector<VariationRecord>& records, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    for (const auto& r : records)
        out << json{{"topic", r.topic}, {"question", r.question}, {"variations", r.variations}}.dump() << "\n";
}

}  // namespace faqrag
