// Acceptance gate: one PASS/FAIL line per primary criterion. Exit status is nonzero when
// any gating criterion fails; the retrieval reproduction line is a soft target and only
// reports (with a tokenizer ablation) when it misses.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "oracles/reference.hpp"
#include "support.hpp"

using namespace faqrag;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    bool gating = true;
};

int g_failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* verdict = o.pass ? "PASS" : (o.gating ? "FAIL" : "SOFT-FAIL");
    std::cout << "[" << verdict << "] " << name << " (" << std::fixed << std::setprecision(1) << s << " s): " << o.detail
              << std::endl;
    if (!o.pass && o.gating) ++g_failures;
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args, const fs::path& stdout_file) {
    const std::string cmd = std::string("\"") + FAQRAG_CLI + "\" " + args + " > \"" + stdout_file.string() + "\" 2>&1";
    return std::system(cmd.c_str());
}

std::string config_arg() { return "--config \"" + (testing_support::data_dir() / "config.json").string() + "\""; }

// ---------------------------------------------------------------------------------------

Outcome metric_oracles() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937 rng(20240611);
    constexpr int kInstances = 1000;
    double worst_ndcg = 0, worst_rouge = 0, worst_bert = 0, worst_mse = 0;

    const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f", "g", "h"};
    std::uniform_int_distribution<int> grade(0, 2), len(0, 6), cutoff(1, 6), judged(1, 6);
    for (int i = 0; i < kInstances; ++i) {
        auto ids = pool;
        std::shuffle(ids.begin(), ids.end(), rng);
        std::map<std::string, int> qrels;
        for (int j = judged(rng); j > 0; --j) qrels[ids[static_cast<std::size_t>(j - 1)]] = grade(rng);
        qrels[ids[0]] = std::max(qrels[ids[0]], 1);
        std::shuffle(ids.begin(), ids.end(), rng);
        const std::vector<std::string> ranking(ids.begin(), ids.begin() + len(rng));
        const int k = cutoff(rng);
        worst_ndcg = std::max(worst_ndcg, std::abs(ndcg(ranking, qrels, k) - oracle::ndcg(ranking, qrels, std::size_t(k))));
    }

    std::uniform_int_distribution<int> tlen(1, 12), word(0, 9);
    const auto text = [&] {
        std::string s;
        for (int n = tlen(rng); n > 0; --n) s += "w" + std::to_string(word(rng)) + " ";
        return s;
    };
    for (int i = 0; i < kInstances; ++i) {
        const auto c = text(), r = text();
        const auto got = rouge1(c, r);
        const auto want = oracle::rouge1(oracle::split_ws(c), oracle::split_ws(r));
        worst_rouge = std::max({worst_rouge, std::abs(got.precision - want.p), std::abs(got.recall - want.r),
                                std::abs(got.f1 - want.f)});
    }

    HashedTokenEmbedder embedder(256);
    for (int i = 0; i < kInstances; ++i) {
        const auto c = text(), r = text();
        const auto got = bertscore(c, r, embedder);
        const auto want = oracle::bertscore(embedder.embed(oracle::split_ws(c)), embedder.embed(oracle::split_ws(r)));
        worst_bert = std::max({worst_bert, std::abs(got.precision - want.p), std::abs(got.recall - want.r),
                               std::abs(got.f1 - want.f)});
    }

    std::uniform_int_distribution<int> n_groups(2, 5), size(2, 20);
    std::uniform_real_distribution<double> value(0.0, 1.0);
    for (int i = 0; i < kInstances; ++i) {
        std::vector<std::vector<double>> groups(static_cast<std::size_t>(n_groups(rng)));
        for (auto& g : groups) {
            g.resize(static_cast<std::size_t>(size(rng)));
            for (auto& x : g) x = value(rng);
        }
        worst_mse = std::max(worst_mse, std::abs(pooled_mse(groups).mse - oracle::pooled_mse(groups).mse));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = worst_ndcg <= 1e-9 && worst_rouge <= 1e-9 && worst_bert <= 1e-6 && worst_mse <= 1e-9 && secs < 60;
    std::ostringstream d;
    d << kInstances << " instances each; max |err| ndcg " << worst_ndcg << ", rouge1 " << worst_rouge << ", bertscore "
      << worst_bert << ", pooled_mse " << worst_mse;
    return {pass, d.str()};
}

Outcome bm25_fixture() {
    const auto index = InvertedIndex::build(
        testing_support::corpus_of({{"d1", "cat sat"}, {"d2", "cat cat ran"}, {"d3", "dog ran"}}));
    const double s1 = bm25_score(index, {"cat"}, "d1"), s2 = bm25_score(index, {"cat"}, "d2");
    const auto ranking = bm25_search(index, "cat", 2).passage_ids();
    const bool pass = std::abs(s1 - 0.4992) <= 1e-3 && std::abs(s2 - 0.5982) <= 1e-3 &&
                      ranking == std::vector<std::string>{"d2", "d1"};
    return {pass, "d1 " + fmt(s1) + ", d2 " + fmt(s2) + ", ranking [" + ranking[0] + ", " + ranking[1] + "]"};
}

Outcome studentized_range() {
    struct Cell {
        double alpha;
        int k;
        double df, q;
    };
    const std::vector<Cell> cells = {
        {.05, 2, 10, 3.15}, {.05, 4, 10, 4.33}, {.05, 5, 10, 4.65}, {.01, 2, 10, 4.48}, {.01, 3, 10, 5.27},
        {.01, 4, 10, 5.77}, {.01, 5, 10, 6.14}, {.05, 2, 20, 2.95}, {.05, 3, 20, 3.58}, {.05, 4, 20, 3.96},
        {.05, 5, 20, 4.23}, {.01, 3, 20, 4.64}, {.05, 3, 60, 3.40}, {.05, 3, 120, 3.36}, {.05, 10, 30, 4.82},
        {.01, 5, 30, 5.05}, {.05, 2, 5, 3.64},  {.01, 2, 5, 5.70},  {.05, 6, 24, 4.37}, {.01, 6, 24, 5.37},
    };
    const double headline = studentized_range_quantile(0.05, 3, 10);
    double worst = 0;
    for (const auto& c : cells) worst = std::max(worst, std::abs(studentized_range_quantile(c.alpha, c.k, c.df) - c.q));
    const bool pass = std::abs(headline - 3.88) <= 0.01 && worst <= 0.02;
    return {pass, "q(0.05,3,10) = " + fmt(headline) + "; " + std::to_string(cells.size()) +
                      " further cells, max |err| " + fmt(worst)};
}

Outcome testbed_integrity() {
    ValidationReport v;
    const auto c = load_test_collection(testing_support::testbed_config().data, &v);
    const auto k = c.count(QuestionType::Known), i = c.count(QuestionType::Inferred), o = c.count(QuestionType::OutOfKB);
    const bool pass = v.ok() && c.questions.size() == 106 && c.passages.size() == 120 && k == 84 && i == 12 && o == 10;
    std::ostringstream d;
    d << c.questions.size() << " questions, " << c.passages.size() << " passages, " << k << "/" << i << "/" << o
      << " split, " << v.violations.size() << " violations";
    return {pass, d.str()};
}

// Mean Known NDCG of BM25 at each cutoff under a tokenizer variant.
std::map<int, double> bm25_known_ndcg(const TestCollection& c, const TokenizerConfig& tokenizer) {
    const auto index = InvertedIndex::build(c.passages, tokenizer);
    std::map<int, double> out;
    for (int k : {1, 3, 5}) {
        double sum = 0;
        int n = 0;
        for (const auto& q : c.questions) {
            if (q.qtype != QuestionType::Known) continue;
            sum += ndcg(bm25_search(index, q.text, k), c.judgments_for(q.topic), k);
            ++n;
        }
        out[k] = sum / n;
    }
    return out;
}

Outcome retrieval_reproduction() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::map<int, double> target = {{1, 0.5119}, {3, 0.4912}, {5, 0.4733}};
    const auto config = testing_support::testbed_config();
    const auto engine = Engine::create(config);
    HashedTokenEmbedder embedder(config.bertscore.dim);
    const auto report =
        evaluate(run_batch(*engine, {{Pipeline::RagBm25}, {1, 3, 5}, config.workers, {}}), engine->collection(), embedder);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool within = true;
    std::ostringstream d;
    d << "Known NDCG";
    for (const auto& s : report.systems) {
        const double v = *s.by_type.at(QuestionType::Known).ndcg;
        const double delta = v - target.at(s.cutoff);
        within = within && std::abs(delta) <= 0.05;
        d << " k=" << s.cutoff << " " << fmt(v) << " (target " << fmt(target.at(s.cutoff)) << ", "
          << (delta >= 0 ? "+" : "") << fmt(delta, 3) << ")";
    }
    d << "; runtime " << fmt(secs, 2) << " s";
    if (secs >= 30) return {false, d.str() + " exceeds 30 s"};
    if (within) return {true, d.str()};

    d << "\n    tokenizer ablation (Known NDCG k=1/3/5):";
    TokenizerConfig stop;
    stop.stopwords = english_stopwords();
    TokenizerConfig porter;
    porter.stemmer = Stemmer::Porter;
    TokenizerConfig both = stop;
    both.stemmer = Stemmer::Porter;
    for (const auto& [name, tok] : std::vector<std::pair<std::string, TokenizerConfig>>{
             {"plain", {}}, {"stopwords", stop}, {"porter", porter}, {"porter+stopwords", both}}) {
        const auto v = bm25_known_ndcg(engine->collection(), tok);
        d << "\n      " << std::left << std::setw(18) << name << fmt(v.at(1)) << " / " << fmt(v.at(3)) << " / "
          << fmt(v.at(5));
    }
    d << "\n    the collection is a hand-built stand-in for the published one; see README";
    return {false, d.str(), false};
}

Outcome out_of_kb_behaviour() {
    const auto config = testing_support::testbed_config();
    const auto engine = Engine::create(config);
    const auto artifacts = run_batch(*engine, {config.pipelines, config.cutoffs, config.workers, {}});
    const auto& questions = engine->collection().questions;
    std::ostringstream d;
    bool pass = config.generator.kind == "extractive" && config.generator.extractive.min_top_score == 0.0;
    for (const auto& run : artifacts.runs) {
        std::vector<AnswerResult> oob;
        for (std::size_t i = 0; i < questions.size(); ++i)
            if (questions[i].qtype == QuestionType::OutOfKB) oob.push_back(run.answers[i]);
        const double rate = unanswered_rate(oob);
        if (run.system.pipeline == Pipeline::IB) {
            pass = pass && oob.size() == 10 && rate >= 70.0;
            d << "IB unanswered " << fmt(rate, 0) << "%;";
        } else {
            pass = pass && rate <= 10.0;
            d << " " << run.system.tag() << " " << fmt(rate, 0) << "%";
        }
    }
    return {pass, d.str()};
}

Outcome determinism(const fs::path& work) {
    const auto a = work / "run-a", b = work / "run-b";
    for (const auto& dir : {a, b}) {
        const int rc = run_cli("run-batch " + config_arg() + " --out \"" + dir.string() + "\"", work / "run-batch.log");
        if (rc != 0) return {false, "run-batch exited with " + std::to_string(rc) + ": " + slurp(work / "run-batch.log")};
    }
    std::size_t compared = 0, differing = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        const auto name = entry.path().filename().string();
        if (!(name.starts_with("run.") || name.starts_with("answers."))) continue;
        ++compared;
        if (!fs::exists(b / name) || slurp(entry.path()) != slurp(b / name)) ++differing;
    }
    const bool pass = compared == 14 && differing == 0;
    return {pass, std::to_string(compared) + " run/answer files compared across two CLI run-batch executions, " +
                      std::to_string(differing) + " differ"};
}

Outcome table_report(const fs::path& work) {
    const auto table_file = work / "table.txt";
    int rc = run_cli("compare " + config_arg() + " --format table \"" + (work / "run-a").string() + "\"", table_file);
    if (rc != 0) return {false, "compare exited with " + std::to_string(rc) + ": " + slurp(table_file)};
    const auto table = slurp(table_file);
    const auto body = table.substr(0, table.find("\n\n"));
    int rows = 0;
    std::istringstream lines(body);
    for (std::string line; std::getline(lines, line);)
        if (line.starts_with("Intent-Based") || line.starts_with("RAG (")) ++rows;
    int groups = 0;
    for (const auto* g : {"Known (84 Questions)", "Inferred (12 Questions)", "Out of KB (10 Questions)"})
        if (body.find(g) != std::string::npos) ++groups;
    const auto stars = std::count(body.begin(), body.end(), '*');

    // Self comparison: the same system run twice.
    const auto s1 = work / "self-1", s2 = work / "self-2";
    for (const auto& dir : {s1, s2}) {
        rc = run_cli("run-batch " + config_arg() + " --pipeline rag-bm25 --cutoff 3 --out \"" + dir.string() + "\"",
                     work / "self.log");
        if (rc != 0) return {false, "self run-batch failed: " + slurp(work / "self.log")};
    }
    const auto self_file = work / "self.txt";
    rc = run_cli("compare " + config_arg() + " --format table \"" + s1.string() + "\" \"" + s2.string() + "\"", self_file);
    if (rc != 0) return {false, "self compare failed: " + slurp(self_file)};
    const auto self = slurp(self_file);
    const auto self_body = self.substr(0, self.find("\n\n"));
    const auto self_stars = std::count(self_body.begin(), self_body.end(), '*');

    const bool pass = rows == 7 && groups == 3 && stars > 0 && self_stars == 0;
    std::ostringstream d;
    d << rows << " rows, " << groups << " column groups, " << stars << " starred cells; self-comparison " << self_stars
      << " stars";
    std::cout << table;
    return {pass, d.str()};
}

Outcome offline_only() {
    const auto c = testing_support::testbed_config();
    const bool pass = c.dense.provider == "hashed" && !c.dense.endpoint && c.generator.kind == "extractive" &&
                      !c.generator.endpoint && !c.llm && c.bertscore.embedder == "hashed" && !c.bertscore.endpoint;
    return {pass, pass ? "shipped config uses hashed embeddings and the extractive generator; no endpoints, no UI build"
                       : "shipped config references a remote endpoint"};
}

}  // namespace

int main() {
    testing_support::TempDir work;
    report("Metric oracles", metric_oracles);
    report("BM25 fixture", bm25_fixture);
    report("Studentized-range quantiles", studentized_range);
    report("Testbed integrity", testbed_integrity);
    report("Retrieval reproduction (soft target)", retrieval_reproduction);
    report("Out-of-KB behaviour", out_of_kb_behaviour);
    report("End-to-end determinism", [&] { return determinism(work.path()); });
    report("Table-2-shaped report", [&] { return table_report(work.path()); });
    report("Offline, primary components only", offline_only);
    std::cout << (g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED") << " (" << g_failures
              << " gating failures)" << std::endl;
    return g_failures == 0 ? 0 : 1;
}
