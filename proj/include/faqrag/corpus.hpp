#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace faqrag {

using json = nlohmann::json;

inline constexpr std::string_view kFallbackAnswer = "I'm sorry, I don't have an answer.";

enum class QuestionType { Known, Inferred, OutOfKB };

inline std::string_view to_string(QuestionType t) {
    switch (t) {
        case QuestionType::Known: return "known";
        case QuestionType::Inferred: return "inferred";
        case QuestionType::OutOfKB: return "out_of_kb";
    }
    return "known";
}

inline std::optional<QuestionType> parse_question_type(std::string_view s) {
    if (s == "known") return QuestionType::Known;
    if (s == "inferred") return QuestionType::Inferred;
    if (s == "out_of_kb") return QuestionType::OutOfKB;
    return std::nullopt;
}

inline constexpr QuestionType kAllQuestionTypes[] = {QuestionType::Known, QuestionType::Inferred,
                                                     QuestionType::OutOfKB};

inline std::string_view trim(std::string_view s) {
    const auto ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!s.empty() && ws(s.front())) s.remove_prefix(1);
    while (!s.empty() && ws(s.back())) s.remove_suffix(1);
    return s;
}

struct Passage {
    std::string id;
    std::string text;
    std::optional<std::string> topic;

    bool operator==(const Passage&) const = default;
};

class PassageCorpus {
public:
    PassageCorpus() = default;

    explicit PassageCorpus(std::vector<Passage> passages) {
        for (auto& p : passages) add(std::move(p));
    }

    void add(Passage passage) {
        if (index_.contains(passage.id))
            throw ValidationError("duplicate passage id \"" + passage.id + "\"");
        index_.emplace(passage.id, passages_.size());
        passages_.push_back(std::move(passage));
    }

    const Passage* find(std::string_view id) const {
        auto it = index_.find(std::string(id));
        return it == index_.end() ? nullptr : &passages_[it->second];
    }

    const Passage& at(std::string_view id) const {
        if (const auto* p = find(id)) return *p;
        throw Error("unknown passage id \"" + std::string(id) + "\"");
    }

    bool contains(std::string_view id) const { return find(id) != nullptr; }
    std::size_t size() const noexcept { return passages_.size(); }
    bool empty() const noexcept { return passages_.empty(); }
    const std::vector<Passage>& passages() const noexcept { return passages_; }
    auto begin() const noexcept { return passages_.begin(); }
    auto end() const noexcept { return passages_.end(); }

    bool operator==(const PassageCorpus& other) const { return passages_ == other.passages_; }

private:
    std::vector<Passage> passages_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct Question {
    std::string id;
    std::string text;
    QuestionType qtype = QuestionType::Known;
    std::string topic;
    std::string gold_answer_id;

    bool operator==(const Question&) const = default;
};

struct GoldAnswer {
    std::string id;
    std::string text;
    std::vector<std::string> source_passage_ids;

    bool operator==(const GoldAnswer&) const = default;
};

struct RelevanceJudgment {
    std::string topic;
    std::string passage_id;
    int grade = 0;

    bool operator==(const RelevanceJudgment&) const = default;
};

struct TestCollection {
    PassageCorpus passages;
    std::vector<Question> questions;
    std::map<std::string, GoldAnswer> gold_answers;
    std::vector<RelevanceJudgment> judgments;

    bool operator==(const TestCollection&) const = default;

    const Question* find_question(std::string_view id) const {
        auto it = std::find_if(questions.begin(), questions.end(),
                               [&](const Question& q) { return q.id == id; });
        return it == questions.end() ? nullptr : &*it;
    }

    const GoldAnswer& gold_answer(const Question& q) const {
        auto it = gold_answers.find(q.gold_answer_id);
        if (it == gold_answers.end())
            throw Error("question " + q.id + " references unknown gold answer " + q.gold_answer_id);
        return it->second;
    }

    // passage id -> grade for one topic; grade-0 entries included as judged.
    std::map<std::string, int> judgments_for(std::string_view topic) const {
        std::map<std::string, int> out;
        for (const auto& j : judgments)
            if (j.topic == topic) out[j.passage_id] = j.grade;
        return out;
    }

    std::size_t count(QuestionType t) const {
        return static_cast<std::size_t>(std::count_if(
            questions.begin(), questions.end(), [t](const Question& q) { return q.qtype == t; }));
    }
};

struct Violation {
    std::string code;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }

    bool has(std::string_view code) const {
        return std::any_of(violations.begin(), violations.end(),
                           [&](const Violation& v) { return v.code == code; });
    }

    std::string summary() const {
        std::ostringstream os;
        for (const auto& v : violations) os << v.code << ": " << v.message << "\n";
        return os.str();
    }
};

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

// Calls fn(json, line_no) for every non-blank line.
template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
    auto in = open_input(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path.string(), line_no, e.what());
        }
        if (!record.is_object()) throw ParseError(path.string(), line_no, "expected a JSON object");
        fn(record, line_no);
    }
}

inline std::string required_string(const json& record, const char* key, const std::string& source,
                                   std::size_t line) {
    auto it = record.find(key);
    if (it == record.end() || !it->is_string())
        throw ParseError(source, line, std::string("missing or non-string field \"") + key + "\"");
    return it->get<std::string>();
}

inline std::vector<std::string> string_list(const json& record, const char* key,
                                            const std::string& source, std::size_t line) {
    auto it = record.find(key);
    if (it == record.end()) return {};
    if (!it->is_array()) throw ParseError(source, line, std::string("field \"") + key + "\" must be a list");
    std::vector<std::string> out;
    for (const auto& v : *it) {
        if (!v.is_string()) throw ParseError(source, line, std::string("field \"") + key + "\" must hold strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace detail

inline PassageCorpus load_corpus(const std::filesystem::path& path) {
    PassageCorpus corpus;
    const auto source = path.string();
    detail::for_each_json_line(path, [&](const json& r, std::size_t line) {
        Passage p;
        p.id = detail::required_string(r, "id", source, line);
        p.text = detail::required_string(r, "text", source, line);
        if (auto it = r.find("topic"); it != r.end() && !it->is_null()) {
            if (!it->is_string()) throw ParseError(source, line, "field \"topic\" must be a string");
            p.topic = it->get<std::string>();
        }
        if (corpus.contains(p.id))
            throw ValidationError(source + ":" + std::to_string(line) + ": duplicate passage id \"" + p.id + "\"");
        corpus.add(std::move(p));
    });
    return corpus;
}

inline std::vector<Question> load_questions(const std::filesystem::path& path) {
    std::vector<Question> questions;
    const auto source = path.string();
    detail::for_each_json_line(path, [&](const json& r, std::size_t line) {
        Question q;
        q.id = detail::required_string(r, "id", source, line);
        q.text = detail::required_string(r, "text", source, line);
        const auto type = detail::required_string(r, "type", source, line);
        auto parsed = parse_question_type(type);
        if (!parsed) throw ParseError(source, line, "unknown question type \"" + type + "\"");
        q.qtype = *parsed;
        q.topic = detail::required_string(r, "topic", source, line);
        q.gold_answer_id = detail::required_string(r, "gold_answer_id", source, line);
        questions.push_back(std::move(q));
    });
    return questions;
}

inline std::map<std::string, GoldAnswer> load_answers(const std::filesystem::path& path) {
    std::map<std::string, GoldAnswer> answers;
    const auto source = path.string();
    detail::for_each_json_line(path, [&](const json& r, std::size_t line) {
        GoldAnswer a;
        a.id = detail::required_string(r, "id", source, line);
        a.text = detail::required_string(r, "text", source, line);
        a.source_passage_ids = detail::string_list(r, "source_passages", source, line);
        if (answers.contains(a.id))
            throw ValidationError(source + ":" + std::to_string(line) + ": duplicate answer id \"" + a.id + "\"");
        answers.emplace(a.id, std::move(a));
    });
    return answers;
}

// TREC qrels: `<topic> <iteration> <passage_id> <grade>`.
inline std::vector<RelevanceJudgment> load_qrels(const std::filesystem::path& path) {
    std::vector<RelevanceJudgment> out;
    auto in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::istringstream fields(line);
        std::string topic, iteration, passage, grade_text, extra;
        if (!(fields >> topic >> iteration >> passage >> grade_text) || (fields >> extra))
            throw ParseError(path.string(), line_no, "expected 4 whitespace-separated fields");
        RelevanceJudgment j{topic, passage, 0};
        try {
            std::size_t used = 0;
            j.grade = std::stoi(grade_text, &used);
            if (used != grade_text.size()) throw std::invalid_argument(grade_text);
        } catch (const std::exception&) {
            throw ParseError(path.string(), line_no, "grade \"" + grade_text + "\" is not an integer");
        }
        out.push_back(std::move(j));
    }
    return out;
}

inline void save_corpus(const PassageCorpus& corpus, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    for (const auto& p : corpus) {
        json r = {{"id", p.id}, {"text", p.text}};
        if (p.topic) r["topic"] = *p.topic;
        out << r.dump() << "\n";
    }
}

inline void save_questions(const std::vector<Question>& questions, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    for (const auto& q : questions) {
        json r = {{"id", q.id}, {"text", q.text}, {"type", to_string(q.qtype)},
                  {"topic", q.topic}, {"gold_answer_id", q.gold_answer_id}};
        out << r.dump() << "\n";
    }
}

inline void save_answers(const std::map<std::string, GoldAnswer>& answers, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    for (const auto& [id, a] : answers) {
        json r = {{"id", a.id}, {"text", a.text}, {"source_passages", a.source_passage_ids}};
        out << r.dump() << "\n";
    }
}

inline void save_qrels(const std::vector<RelevanceJudgment>& judgments, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    for (const auto& j : judgments) out << j.topic << " 0 " << j.passage_id << " " << j.grade << "\n";
}

struct ValidationOptions {
    std::string fallback_text{kFallbackAnswer};
};

inline ValidationReport validate(const TestCollection& c, const ValidationOptions& options = {}) {
    ValidationReport report;
    const auto add = [&](std::string code, std::string message) {
        report.violations.push_back({std::move(code), std::move(message)});
    };

    for (const auto& p : c.passages)
        if (trim(p.text).empty()) add("empty_passage", "passage " + p.id + " has empty text");

    std::set<std::string> question_ids;
    std::map<std::string, QuestionType> topic_type;
    std::map<std::string, std::set<QuestionType>> answer_types;
    for (const auto& q : c.questions) {
        if (!question_ids.insert(q.id).second) add("duplicate_question", "question id " + q.id + " repeated");
        if (!c.gold_answers.contains(q.gold_answer_id))
            add("dangling_answer", "question " + q.id + " references unknown gold answer " + q.gold_answer_id);
        else
            answer_types[q.gold_answer_id].insert(q.qtype);
        auto [it, inserted] = topic_type.emplace(q.topic, q.qtype);
        if (!inserted && it->second != q.qtype)
            add("mixed_topic_type", "topic " + q.topic + " mixes question types (question " + q.id + ")");
    }

    for (const auto& [id, a] : c.gold_answers) {
        for (const auto& pid : a.source_passage_ids)
            if (!c.passages.contains(pid))
                add("dangling_passage", "gold answer " + id + " references unknown passage " + pid);
        auto types = answer_types.find(id);
        if (types == answer_types.end()) continue;
        if (types->second.size() > 1) {
            add("mixed_answer_type", "gold answer " + id + " is shared by questions of different types");
            continue;
        }
        switch (*types->second.begin()) {
            case QuestionType::Known:
                if (a.source_passage_ids.size() != 1) {
                    add("known_answer_sources", "known answer " + id + " must cite exactly one passage");
                } else if (const auto* p = c.passages.find(a.source_passage_ids.front());
                           p && p->text != a.text) {
                    add("known_answer_text", "known answer " + id + " differs from passage " + p->id);
                }
                break;
            case QuestionType::Inferred:
                if (a.source_passage_ids.size() < 2)
                    add("inferred_answer_sources", "inferred answer " + id + " must cite at least two passages");
                break;
            case QuestionType::OutOfKB:
                if (!a.source_passage_ids.empty())
                    add("out_of_kb_answer_sources", "out-of-KB answer " + id + " must cite no passages");
                if (a.text != options.fallback_text)
                    add("out_of_kb_answer_text", "out-of-KB answer " + id + " is not the fallback message");
                break;
        }
    }

    std::set<std::pair<std::string, std::string>> judged;
    std::set<std::string> topics_with_grade2;
    for (const auto& j : c.judgments) {
        if (j.grade < 0 || j.grade > 2)
            add("bad_grade", "judgment " + j.topic + "/" + j.passage_id + " has grade " + std::to_string(j.grade));
        if (!judged.emplace(j.topic, j.passage_id).second)
            add("duplicate_judgment", "topic " + j.topic + " judges passage " + j.passage_id + " twice");
        if (!c.passages.contains(j.passage_id))
            add("dangling_passage", "qrels for topic " + j.topic + " reference unknown passage " + j.passage_id);
        auto t = topic_type.find(j.topic);
        if (t == topic_type.end()) {
            add("dangling_topic", "qrels reference topic " + j.topic + " with no questions");
            continue;
        }
        if (t->second == QuestionType::OutOfKB && j.grade > 0)
            add("out_of_kb_relevant", "out-of-KB topic " + j.topic + " has relevant passage " + j.passage_id);
        if (j.grade == 2) topics_with_grade2.insert(j.topic);
    }
    for (const auto& [topic, type] : topic_type)
        if (type == QuestionType::Known && !topics_with_grade2.contains(topic))
            add("known_topic_unjudged", "known topic " + topic + " has no highly relevant passage");

    return report;
}

struct CollectionPaths {
    std::filesystem::path passages;
    std::filesystem::path questions;
    std::filesystem::path answers;
    std::filesystem::path qrels;
};

// Loads and cross-links the four testbed files. Unresolved references are always fatal.
// Other invariant violations go to `report` when given; otherwise they are fatal too.
inline TestCollection load_test_collection(const CollectionPaths& paths, ValidationReport* report = nullptr,
                                           const ValidationOptions& options = {}) {
    TestCollection c;
    c.passages = load_corpus(paths.passages);
    c.questions = load_questions(paths.questions);
    c.gold_answers = load_answers(paths.answers);
    c.judgments = load_qrels(paths.qrels);

    std::set<std::string> unresolved;
    for (const auto& q : c.questions)
        if (!c.gold_answers.contains(q.gold_answer_id)) unresolved.insert(q.gold_answer_id);
    for (const auto& [id, a] : c.gold_answers)
        for (const auto& pid : a.source_passage_ids)
            if (!c.passages.contains(pid)) unresolved.insert(pid);
    for (const auto& j : c.judgments)
        if (!c.passages.contains(j.passage_id)) unresolved.insert(j.passage_id);
    if (!unresolved.empty()) {
        std::string msg = "dangling references:";
        for (const auto& id : unresolved) msg += " " + id;
        throw ValidationError(msg);
    }

    auto found = validate(c, options);
    if (report) {
        *report = std::move(found);
    } else if (!found.ok()) {
        throw ValidationError("test collection failed validation:\n" + found.summary());
    }
    return c;
}

inline void save_test_collection(const TestCollection& c, const CollectionPaths& paths) {
    save_corpus(c.passages, paths.passages);
    save_questions(c.questions, paths.questions);
    save_answers(c.gold_answers, paths.answers);
    save_qrels(c.judgments, paths.qrels);
}

}  // namespace faqrag
