#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"

namespace faqrag {

struct RankedPassage {
    std::string passage_id;
    double score = 0.0;

    bool operator==(const RankedPassage&) const = default;
};

// Scores are non-increasing; equal scores are ordered by ascending passage id.
struct Ranking {
    std::string question_id;
    std::vector<RankedPassage> entries;
    int cutoff = 0;

    bool empty() const noexcept { return entries.empty(); }
    std::size_t size() const noexcept { return entries.size(); }

    std::vector<std::string> passage_ids() const {
        std::vector<std::string> ids;
        ids.reserve(entries.size());
        for (const auto& e : entries) ids.push_back(e.passage_id);
        return ids;
    }

    bool operator==(const Ranking&) const = default;
};

inline bool ranks_before(const RankedPassage& a, const RankedPassage& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.passage_id < b.passage_id;
}

// Keeps the best `cutoff` candidates in ranking order.
inline std::vector<RankedPassage> top_k(std::vector<RankedPassage> candidates, int cutoff) {
    const auto k = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(std::max(cutoff, 0)));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                      ranks_before);
    candidates.resize(k);
    return candidates;
}

inline std::string format_score(double score) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", score);
    return buf;
}

// TREC run line: `<topic> Q0 <passage_id> <rank> <score> <tag>`, ranks starting at 1.
inline void write_trec_run(std::ostream& out, const Ranking& ranking, const std::string& tag) {
    int rank = 1;
    for (const auto& e : ranking.entries)
        out << ranking.question_id << " Q0 " << e.passage_id << " " << rank++ << " " << format_score(e.score)
            << " " << tag << "\n";
}

struct TrecRun {
    std::string tag;
    std::map<std::string, Ranking> rankings;  // keyed by topic/question id
};

inline std::map<std::string, TrecRun> parse_trec_run(std::istream& in, const std::string& source = "run") {
    std::map<std::string, TrecRun> runs;
    std::map<std::string, std::map<std::string, std::vector<std::pair<int, RankedPassage>>>> raw;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::istringstream fields(line);
        std::string topic, q0, pid, rank_text, score_text, tag, extra;
        if (!(fields >> topic >> q0 >> pid >> rank_text >> score_text >> tag) || (fields >> extra))
            throw ParseError(source, line_no, "expected 6 whitespace-separated fields");
        try {
            raw[tag][topic].push_back({std::stoi(rank_text), {pid, std::stod(score_text)}});
        } catch (const std::exception&) {
            throw ParseError(source, line_no, "bad rank or score");
        }
    }
    for (auto& [tag, topics] : raw) {
        auto& run = runs[tag];
        run.tag = tag;
        for (auto& [topic, rows] : topics) {
            std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            Ranking r;
            r.question_id = topic;
            for (auto& row : rows) r.entries.push_back(std::move(row.second));
            r.cutoff = static_cast<int>(r.entries.size());
            run.rankings.emplace(topic, std::move(r));
        }
    }
    return runs;
}

inline std::map<std::string, TrecRun> load_trec_run(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    return parse_trec_run(in, path.string());
}

}  // namespace faqrag
