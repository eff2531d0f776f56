#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "corpus.hpp"
#include "engine.hpp"
#include "metrics.hpp"
#include "ranking.hpp"
#include "significance.hpp"

namespace faqrag {

struct SystemId {
    Pipeline pipeline = Pipeline::IB;
    int cutoff = 1;

    auto operator<=>(const SystemId&) const = default;

    // "ib", "rag-bm25-k3", ... used for file names and TREC run tags.
    std::string tag() const {
        if (pipeline == Pipeline::IB) return "ib";
        return std::string(to_string(pipeline)) + "-k" + std::to_string(cutoff);
    }
};

inline SystemId parse_system_tag(const std::string& tag) {
    if (tag == "ib") return {Pipeline::IB, 1};
    const auto pos = tag.rfind("-k");
    if (pos == std::string::npos) throw Error("bad system tag \"" + tag + "\"");
    auto p = parse_pipeline(tag.substr(0, pos));
    if (!p) throw Error("bad system tag \"" + tag + "\"");
    return {*p, std::stoi(tag.substr(pos + 2))};
}

// Intent-based runs ignore cutoffs and are recorded once at cutoff 1.
inline std::vector<SystemId> expand_systems(const std::vector<Pipeline>& pipelines, const std::set<int>& cutoffs) {
    std::vector<SystemId> out;
    for (auto p : pipelines) {
        if (p == Pipeline::IB) {
            out.push_back({p, 1});
            continue;
        }
        for (int k : cutoffs) out.push_back({p, k});
    }
    return out;
}

struct SystemRun {
    SystemId system;
    std::vector<AnswerResult> answers;  // collection question order
    std::vector<Ranking> rankings;      // parallel to answers
    std::vector<double> retrieval_ms;   // parallel to answers
    std::vector<double> generation_ms;
};

struct RunArtifacts {
    std::vector<SystemRun> runs;
    std::filesystem::path out_dir;
    std::size_t failures = 0;
    double elapsed_ms = 0.0;
};

struct RunConfig {
    std::vector<Pipeline> pipelines;
    std::set<int> cutoffs;
    int workers = 1;
    std::filesystem::path out_dir;  // empty: keep artifacts in memory only
};

inline json answer_to_json(const AnswerResult& a) {
    json j = {{"question_id", a.question_id},
              {"pipeline", to_string(a.pipeline)},
              {"cutoff", a.cutoff},
              {"text", a.text},
              {"answered", a.answered},
              {"source_passages", a.source_passage_ids}};
    if (a.error) j["error"] = *a.error;
    return j;
}

inline AnswerResult answer_from_json(const json& j) {
    AnswerResult a;
    a.question_id = j.at("question_id").get<std::string>();
    auto p = parse_pipeline(j.at("pipeline").get<std::string>());
    if (!p) throw Error("unknown pipeline in answer record for " + a.question_id);
    a.pipeline = *p;
    a.cutoff = j.at("cutoff").get<int>();
    a.text = j.at("text").get<std::string>();
    a.answered = j.at("answered").get<bool>();
    a.source_passage_ids = j.value("source_passages", std::vector<std::string>{});
    if (j.contains("error")) a.error = j["error"].get<std::string>();
    return a;
}

inline std::filesystem::path run_file(const std::filesystem::path& dir, const SystemId& s) {
    return dir / ("run." + s.tag() + ".trec");
}

inline std::filesystem::path answers_file(const std::filesystem::path& dir, const SystemId& s) {
    return dir / ("answers." + s.tag() + ".jsonl");
}

inline void write_system_run(const SystemRun& run, const std::filesystem::path& dir) {
    auto trec = detail::open_output(run_file(dir, run.system));
    for (const auto& r : run.rankings) write_trec_run(trec, r, run.system.tag());
    auto answers = detail::open_output(answers_file(dir, run.system));
    for (const auto& a : run.answers) answers << answer_to_json(a).dump() << "\n";
}

inline json timing_summary(const RunArtifacts& artifacts) {
    const auto stats = [](const std::vector<double>& xs) {
        if (xs.empty()) return json{{"mean_ms", 0.0}, {"max_ms", 0.0}};
        double total = 0.0, worst = 0.0;
        for (double x : xs) {
            total += x;
            worst = std::max(worst, x);
        }
        return json{{"mean_ms", total / static_cast<double>(xs.size())}, {"max_ms", worst}};
    };
    json systems = json::object();
    for (const auto& run : artifacts.runs)
        systems[run.system.tag()] = {{"retrieval", stats(run.retrieval_ms)}, {"generation", stats(run.generation_ms)}};
    return {{"total_ms", artifacts.elapsed_ms}, {"failures", artifacts.failures}, {"systems", systems}};
}

// Runs every configured system over every question. Per-question failures are recorded
// in the answer (`error`) and tallied; they never abort the batch. Output files depend
// only on the inputs, never on scheduling.
inline RunArtifacts run_batch(const Engine& engine, const RunConfig& config) {
    if (config.pipelines.empty()) throw ValidationError("no pipeline selected");
    if (config.cutoffs.empty()) throw ValidationError("cutoff set is empty");
    for (int k : config.cutoffs) {
        if (k < 1) throw ValidationError("cutoff " + std::to_string(k) + " is below 1");
        if (!engine.config().cutoffs.contains(k))
            throw ValidationError("cutoff " + std::to_string(k) + " is not in the configured set");
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto& questions = engine.collection().questions;
    RunArtifacts artifacts;
    artifacts.out_dir = config.out_dir;

    for (const auto& system : expand_systems(config.pipelines, config.cutoffs)) {
        SystemRun run;
        run.system = system;
        run.answers.resize(questions.size());
        run.rankings.resize(questions.size());
        run.retrieval_ms.assign(questions.size(), 0.0);
        run.generation_ms.assign(questions.size(), 0.0);
        std::atomic<std::size_t> next{0};
        std::atomic<std::size_t> failures{0};
        const auto worker = [&] {
            for (std::size_t i = next++; i < questions.size(); i = next++) {
                const auto& q = questions[i];
                try {
                    auto out = engine.answer(system.pipeline, q, system.cutoff);
                    run.answers[i] = std::move(out.answer);
                    run.rankings[i] = std::move(out.ranking);
                    run.retrieval_ms[i] = out.retrieval_ms;
                    run.generation_ms[i] = out.generation_ms;
                } catch (const std::exception& e) {
                    AnswerResult a;
                    a.question_id = q.id;
                    a.pipeline = system.pipeline;
                    a.cutoff = system.cutoff;
                    a.error = e.what();
                    run.answers[i] = std::move(a);
                    run.rankings[i] = Ranking{q.id, {}, system.cutoff};
                    ++failures;
                }
            }
        };
        const int n_workers = std::clamp(config.workers, 1, 64);
        if (n_workers == 1) {
            worker();
        } else {
            std::vector<std::jthread> pool;
            for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        }
        artifacts.failures += failures.load();
        if (!config.out_dir.empty()) write_system_run(run, config.out_dir);
        artifacts.runs.push_back(std::move(run));
    }
    artifacts.elapsed_ms = elapsed_ms(t0);
    if (!config.out_dir.empty()) {
        auto snapshot = detail::open_output(config.out_dir / "config.json");
        snapshot << config_snapshot(engine.config()).dump(2) << "\n";
        // Wall-clock numbers live apart from the byte-reproducible artifacts.
        auto timing = detail::open_output(config.out_dir / "timing.json");
        timing << timing_summary(artifacts).dump(2) << "\n";
    }
    return artifacts;
}

// Reads every answers.<tag>.jsonl in `dir` together with its run.<tag>.trec.
inline RunArtifacts load_artifacts(const std::filesystem::path& dir) {
    RunArtifacts artifacts;
    artifacts.out_dir = dir;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.starts_with("answers.") && name.ends_with(".jsonl")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        const auto name = path.filename().string();
        const auto tag = name.substr(8, name.size() - 8 - 6);
        SystemRun run;
        run.system = parse_system_tag(tag);
        detail::for_each_json_line(path, [&](const json& r, std::size_t line) {
            try {
                run.answers.push_back(answer_from_json(r));
            } catch (const json::exception& e) {
                throw ParseError(path.string(), line, e.what());
            }
            if (run.answers.back().error) ++artifacts.failures;
        });
        std::map<std::string, Ranking> rankings;
        if (const auto trec = run_file(dir, run.system); std::filesystem::exists(trec)) {
            auto runs = load_trec_run(trec);
            if (auto it = runs.find(tag); it != runs.end()) rankings = std::move(it->second.rankings);
        }
        for (const auto& a : run.answers) {
            auto it = rankings.find(a.question_id);
            Ranking r = it == rankings.end() ? Ranking{a.question_id, {}, run.system.cutoff} : it->second;
            r.cutoff = run.system.cutoff;
            run.rankings.push_back(std::move(r));
        }
        artifacts.runs.push_back(std::move(run));
    }
    if (artifacts.runs.empty()) throw Error("no answers.*.jsonl files in " + dir.string());
    return artifacts;
}

// ---------------------------------------------------------------------------------------
// Evaluation

enum class Metric { Ndcg, BertScoreF1, Rouge1F1 };

inline std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::Ndcg: return "ndcg";
        case Metric::BertScoreF1: return "bertscore_f1";
        case Metric::Rouge1F1: return "rouge1_f1";
    }
    return "ndcg";
}

inline constexpr Metric kAllMetrics[] = {Metric::Ndcg, Metric::BertScoreF1, Metric::Rouge1F1};

struct SignificanceEntry {
    Metric metric = Metric::Ndcg;
    QuestionType qtype = QuestionType::Known;
    HsdResult hsd;
    std::vector<std::string> starred;  // systems differing significantly from all others
};

struct EvalReport {
    std::vector<SystemReport> systems;
    std::string embedder_id;
    std::string gain = "linear";
    std::map<QuestionType, std::size_t> question_counts;
    std::vector<SignificanceEntry> significance;

    bool starred(const std::string& label, Metric m, QuestionType t) const {
        for (const auto& e : significance)
            if (e.metric == m && e.qtype == t)
                return std::find(e.starred.begin(), e.starred.end(), label) != e.starred.end();
        return false;
    }
};

struct EvalOptions {
    GainScheme gain = GainScheme::Linear;
    TokenizerConfig rouge_tokenizer;
};

inline MetricRow score_question(const Question& q, const AnswerResult& a, const Ranking& ranking,
                                const TestCollection& collection, TokenEmbedder& embedder, int cutoff,
                                const EvalOptions& options) {
    MetricRow row;
    row.question_id = q.id;
    row.qtype = q.qtype;
    row.answered = a.answered;
    row.errored = a.error.has_value();
    if (q.qtype != QuestionType::OutOfKB) row.ndcg = ndcg(ranking, collection.judgments_for(q.topic), cutoff, options.gain);
    if (row.errored) return row;
    const auto& gold = collection.gold_answer(q).text;
    row.rouge1 = rouge1(a.text, gold, options.rouge_tokenizer);
    if (!embedder.tokens(a.text).empty()) row.bertscore = bertscore(a.text, gold, embedder);
    return row;
}

inline EvalReport evaluate(const RunArtifacts& artifacts, const TestCollection& collection, TokenEmbedder& embedder,
                           const EvalOptions& options = {}) {
    EvalReport report;
    report.embedder_id = embedder.id();
    report.gain = options.gain == GainScheme::Linear ? "linear" : "exponential";
    for (auto t : kAllQuestionTypes) report.question_counts[t] = collection.count(t);

    for (const auto& run : artifacts.runs) {
        std::map<std::string, std::size_t> by_id;
        for (std::size_t i = 0; i < run.answers.size(); ++i) by_id[run.answers[i].question_id] = i;
        std::vector<MetricRow> rows;
        for (const auto& q : collection.questions) {
            auto it = by_id.find(q.id);
            if (it == by_id.end())
                throw Error("run " + run.system.tag() + " has no answer record for question " + q.id);
            rows.push_back(score_question(q, run.answers[it->second], run.rankings[it->second], collection, embedder,
                                          run.system.cutoff, options));
        }
        report.systems.push_back(aggregate(std::move(rows), run.system.pipeline, run.system.cutoff));
    }
    return report;
}

inline std::optional<double> metric_value(const MetricRow& row, Metric m) {
    if (row.errored && m != Metric::Ndcg) return std::nullopt;
    switch (m) {
        case Metric::Ndcg: return row.ndcg;
        case Metric::BertScoreF1: return row.bertscore.f1;
        case Metric::Rouge1F1: return row.rouge1.f1;
    }
    return std::nullopt;
}

// Tukey HSD per metric and question type across every system in `report`; groups are the
// per-question scores of each system.
inline void compare(EvalReport& report, double alpha) {
    if (report.systems.size() < 2) throw Error("comparison needs at least two systems");
    const auto reference_ids = [](const SystemReport& s) {
        std::vector<std::string> ids;
        for (const auto& r : s.rows) ids.push_back(r.question_id);
        std::sort(ids.begin(), ids.end());
        return ids;
    };
    const auto ids = reference_ids(report.systems.front());
    for (const auto& s : report.systems)
        if (reference_ids(s) != ids) throw Error("reports were computed over different collections");

    std::vector<std::string> labels;
    std::map<std::string, int> seen;
    for (const auto& s : report.systems) {
        auto label = s.label();
        if (int n = seen[label]++; n > 0) label += "#" + std::to_string(n + 1);
        labels.push_back(label);
    }

    report.significance.clear();
    for (auto m : kAllMetrics) {
        for (auto t : kAllQuestionTypes) {
            if (m == Metric::Ndcg && t == QuestionType::OutOfKB) continue;
            std::vector<std::vector<double>> groups;
            for (const auto& s : report.systems) {
                std::vector<double> g;
                for (const auto& r : s.rows)
                    if (r.qtype == t)
                        if (auto v = metric_value(r, m)) g.push_back(*v);
                groups.push_back(std::move(g));
            }
            if (std::any_of(groups.begin(), groups.end(), [](const auto& g) { return g.size() < 2; })) continue;
            SignificanceEntry entry;
            entry.metric = m;
            entry.qtype = t;
            entry.hsd = tukey_hsd(groups, alpha, labels);
            for (std::size_t g = 0; g < groups.size(); ++g)
                if (entry.hsd.separated(g)) entry.starred.push_back(labels[g]);
            report.significance.push_back(std::move(entry));
        }
    }
}

inline EvalReport merge_reports(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw Error("nothing to merge");
    EvalReport merged = reports.front();
    merged.significance.clear();
    for (std::size_t i = 1; i < reports.size(); ++i) {
        if (reports[i].question_counts != merged.question_counts)
            throw Error("reports were computed over different collections");
        if (reports[i].gain != merged.gain || reports[i].embedder_id != merged.embedder_id)
            throw Error("reports were computed with different metric options");
        merged.systems.insert(merged.systems.end(), reports[i].systems.begin(), reports[i].systems.end());
    }
    return merged;
}

// ---------------------------------------------------------------------------------------
// Report serialization

inline json prf_to_json(const PRF& p) { return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}}; }

inline PRF prf_from_json(const json& j) {
    return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
}

inline json report_to_json(const EvalReport& report) {
    json systems = json::array();
    for (const auto& s : report.systems) {
        json by_type = json::object();
        for (const auto& [t, a] : s.by_type) {
            json agg = {{"count", a.count},       {"errored", a.errored},
                        {"rouge1", prf_to_json(a.rouge1)}, {"bertscore", prf_to_json(a.bertscore)},
                        {"unanswered_pct", a.unanswered}};
            agg["ndcg"] = a.ndcg ? json(*a.ndcg) : json(nullptr);
            by_type[std::string(to_string(t))] = agg;
        }
        json rows = json::array();
        for (const auto& r : s.rows) {
            json row = {{"question_id", r.question_id}, {"type", to_string(r.qtype)},
                        {"rouge1", prf_to_json(r.rouge1)}, {"bertscore", prf_to_json(r.bertscore)},
                        {"answered", r.answered}, {"errored", r.errored}};
            row["ndcg"] = r.ndcg ? json(*r.ndcg) : json(nullptr);
            rows.push_back(row);
        }
        systems.push_back({{"label", s.label()},
                           {"pipeline", to_string(s.pipeline)},
                           {"cutoff", s.cutoff},
                           {"failures", s.failures},
                           {"by_type", by_type},
                           {"rows", rows}});
    }
    json counts = json::object();
    for (const auto& [t, n] : report.question_counts) counts[std::string(to_string(t))] = n;
    json sig = json::array();
    for (const auto& e : report.significance) {
        json pairs = json::array();
        for (const auto& p : e.hsd.pairs)
            pairs.push_back({{"a", e.hsd.labels[p.i]},
                             {"b", e.hsd.labels[p.j]},
                             {"mean_difference", p.mean_difference},
                             {"q", std::isfinite(p.q) ? json(p.q) : json("inf")},
                             {"critical_q", p.critical_q},
                             {"significant", p.significant}});
        sig.push_back({{"metric", to_string(e.metric)},
                       {"type", to_string(e.qtype)},
                       {"alpha", e.hsd.alpha},
                       {"mse", e.hsd.mse},
                       {"df", e.hsd.df},
                       {"critical_q", e.hsd.critical_q},
                       {"groups", e.hsd.labels},
                       {"means", e.hsd.means},
                       {"pairs", pairs},
                       {"starred", e.starred}});
    }
    return {{"embedder", report.embedder_id},
            {"gain", report.gain},
            {"question_counts", counts},
            {"systems", systems},
            {"significance", sig}};
}

// Restores systems and rows; significance is recomputed by `compare` rather than read.
inline EvalReport report_from_json(const json& j) {
    EvalReport report;
    try {
        report.embedder_id = j.value("embedder", std::string{});
        report.gain = j.value("gain", std::string("linear"));
        for (auto& [k, v] : j.at("question_counts").items()) {
            auto t = parse_question_type(k);
            if (!t) throw Error("unknown question type " + k);
            report.question_counts[*t] = v.get<std::size_t>();
        }
        for (const auto& s : j.at("systems")) {
            auto p = parse_pipeline(s.at("pipeline").get<std::string>());
            if (!p) throw Error("unknown pipeline in report");
            std::vector<MetricRow> rows;
            for (const auto& r : s.at("rows")) {
                MetricRow row;
                row.question_id = r.at("question_id").get<std::string>();
                auto t = parse_question_type(r.at("type").get<std::string>());
                if (!t) throw Error("unknown question type in report row");
                row.qtype = *t;
                if (!r.at("ndcg").is_null()) row.ndcg = r["ndcg"].get<double>();
                row.rouge1 = prf_from_json(r.at("rouge1"));
                row.bertscore = prf_from_json(r.at("bertscore"));
                row.answered = r.at("answered").get<bool>();
                row.errored = r.value("errored", false);
                rows.push_back(std::move(row));
            }
            report.systems.push_back(aggregate(std::move(rows), *p, s.at("cutoff").get<int>()));
        }
    } catch (const json::exception& e) {
        throw Error(std::string("malformed report: ") + e.what());
    }
    return report;
}

inline EvalReport load_report(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    try {
        return report_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

namespace detail {

inline std::string approach_name(Pipeline p) {
    switch (p) {
        case Pipeline::IB: return "Intent-Based (IB)";
        case Pipeline::RagBm25: return "RAG (BM25)";
        case Pipeline::RagDense: return "RAG (Dense)";
    }
    return "";
}

inline std::string fixed(double v, int precision) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

inline std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

}  // namespace detail

// Text table: one row per system, column groups Known / Inferred / Out of KB. A `*`
// follows any value whose system differs significantly from all others.
inline std::string render_table(const EvalReport& report) {
    constexpr std::size_t kName = 20, kCut = 7, kCell = 11;
    std::ostringstream os;
    const auto count = [&](QuestionType t) {
        auto it = report.question_counts.find(t);
        return it == report.question_counts.end() ? std::size_t{0} : it->second;
    };
    os << detail::pad("Approach", kName) << detail::pad("Cutoff", kCut) << "| "
       << detail::pad("Known (" + std::to_string(count(QuestionType::Known)) + " Questions)", kCell * 3) << "| "
       << detail::pad("Inferred (" + std::to_string(count(QuestionType::Inferred)) + " Questions)", kCell * 3)
       << "| " << detail::pad("Out of KB (" + std::to_string(count(QuestionType::OutOfKB)) + " Questions)", kCell * 3)
       << "\n";
    os << detail::pad("", kName) << detail::pad("k", kCut);
    for (int g = 0; g < 2; ++g)
        os << "| " << detail::pad("NDCG", kCell) << detail::pad("BERTScore", kCell) << detail::pad("ROUGE-1", kCell);
    os << "| " << detail::pad("%Unans", kCell) << detail::pad("BERTScore", kCell) << detail::pad("ROUGE-1", kCell)
       << "\n";
    os << std::string(kName + kCut + 3 * (2 + kCell * 3), '-') << "\n";

    std::map<std::string, int> seen;
    for (const auto& s : report.systems) {
        auto label = s.label();
        if (int n = seen[label]++; n > 0) label += "#" + std::to_string(n + 1);
        const auto cell = [&](std::optional<double> v, int precision, Metric m, QuestionType t) {
            if (!v) return detail::pad("-", kCell);
            auto text = detail::fixed(*v, precision);
            if (report.starred(label, m, t)) text += "*";
            return detail::pad(text, kCell);
        };
        os << detail::pad(detail::approach_name(s.pipeline), kName)
           << detail::pad(s.pipeline == Pipeline::IB ? "" : std::to_string(s.cutoff), kCut);
        for (auto t : kAllQuestionTypes) {
            auto it = s.by_type.find(t);
            os << "| ";
            if (it == s.by_type.end()) {
                os << detail::pad("-", kCell) << detail::pad("-", kCell) << detail::pad("-", kCell);
                continue;
            }
            const auto& a = it->second;
            if (t == QuestionType::OutOfKB)
                os << detail::pad(detail::fixed(a.unanswered, 2), kCell);
            else
                os << cell(a.ndcg, 4, Metric::Ndcg, t);
            os << cell(a.bertscore.f1, 4, Metric::BertScoreF1, t) << cell(a.rouge1.f1, 4, Metric::Rouge1F1, t);
        }
        os << "\n";
    }
    os << "\nBERTScore embedder: " << report.embedder_id << "; NDCG gain: " << report.gain;
    if (!report.significance.empty()) {
        os << "; * = Tukey HSD, alpha " << report.significance.front().hsd.alpha
           << ", significantly different from all other systems";
    }
    os << "\n";
    return os.str();
}

}  // namespace faqrag
