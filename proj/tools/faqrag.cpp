#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <faqrag/faqrag.hpp>

namespace fs = std::filesystem;
using namespace faqrag;

namespace {

struct Options {
    std::string config_path = "data/config.json";
    std::vector<std::string> pipelines;
    std::vector<int> cutoffs;
    std::optional<double> alpha;
    std::string format = "table";
    std::string out;
    std::string text;
    std::vector<std::string> inputs;
    std::string host;
    int port = 0;
    std::string static_dir;
};

EngineConfig load(const Options& o) {
    auto config = load_config(o.config_path);
    if (!o.pipelines.empty()) {
        config.pipelines.clear();
        for (const auto& name : o.pipelines) {
            auto p = parse_pipeline(name);
            if (!p) throw Error("unknown pipeline \"" + name + "\"");
            config.pipelines.push_back(*p);
        }
    }
    if (!o.cutoffs.empty()) {
        config.cutoffs = {o.cutoffs.begin(), o.cutoffs.end()};
        if (*config.cutoffs.begin() < 1) throw Error("cutoffs must be at least 1");
    }
    if (o.alpha) config.alpha = *o.alpha;
    return config;
}

Pipeline single_pipeline(const EngineConfig& config, const Options& o, Pipeline fallback) {
    if (o.pipelines.size() > 1) throw Error("this command takes a single --pipeline");
    return o.pipelines.empty() ? fallback : config.pipelines.front();
}

int single_cutoff(const Options& o, int fallback) {
    if (o.cutoffs.size() > 1) throw Error("this command takes a single --cutoff");
    return o.cutoffs.empty() ? fallback : o.cutoffs.front();
}

void emit(const std::string& text, const std::string& out) {
    if (out.empty()) {
        std::cout << text;
        return;
    }
    auto f = detail::open_output(out);
    f << text;
}

void emit_report(const EvalReport& report, const Options& o) {
    emit(o.format == "json" ? report_to_json(report).dump(2) + "\n" : render_table(report), o.out);
}

int cmd_index(const Options& o) {
    auto engine = Engine::create(load(o));
    const auto& index = engine->index();
    json stats = {{"passages", index.doc_count()},
                  {"terms", index.term_count()},
                  {"avg_doc_length", index.avg_doc_length()},
                  {"questions", engine->collection().questions.size()},
                  {"intents", engine->intent_model().intents().size()},
                  {"vector_dim", engine->store().dim()}};
    json counts = json::object();
    for (auto t : kAllQuestionTypes) counts[std::string(to_string(t))] = engine->collection().count(t);
    stats["question_types"] = counts;
    if (!o.out.empty()) {
        save_intent_model(engine->intent_model(), fs::path(o.out) / "intents.jsonl");
        auto f = detail::open_output(fs::path(o.out) / "index.json");
        f << stats.dump(2) << "\n";
    }
    std::cout << stats.dump(2) << "\n";
    return 0;
}

int cmd_search(const Options& o) {
    auto config = load(o);
    const auto pipeline = single_pipeline(config, o, Pipeline::RagBm25);
    const int cutoff = single_cutoff(o, 5);
    auto engine = Engine::create(config);
    const auto ranking = engine->retriever(pipeline).retrieve(o.text, cutoff, "query");
    if (o.format == "json") {
        json hits = json::array();
        for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
            const auto& e = ranking.entries[i];
            hits.push_back({{"rank", i + 1},
                            {"id", e.passage_id},
                            {"score", e.score},
                            {"text", engine->collection().passages.at(e.passage_id).text}});
        }
        emit(hits.dump(2) + "\n", o.out);
        return 0;
    }
    std::string text;
    for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
        const auto& e = ranking.entries[i];
        text += std::to_string(i + 1) + "\t" + e.passage_id + "\t" + format_score(e.score) + "\t" +
                engine->collection().passages.at(e.passage_id).text + "\n";
    }
    emit(text, o.out);
    return 0;
}

int cmd_ask(const Options& o) {
    auto config = load(o);
    const auto pipeline = single_pipeline(config, o, Pipeline::IB);
    const int cutoff = single_cutoff(o, config.server.default_cutoff);
    ChatService service(Engine::create(config), {cutoff});
    const auto r = service.handle_ask({{"question", o.text}, {"mode", to_string(pipeline)}, {"cutoff", cutoff}});
    if (r.status != 200) throw Error(r.body.value("error", std::string("request failed")));
    if (o.format == "json") {
        emit(r.body.dump(2) + "\n", o.out);
        return 0;
    }
    std::string text = r.body["answer"].get<std::string>() + "\n";
    for (const auto& p : r.body["passages"])
        text += "  [" + std::to_string(p["rank"].get<int>()) + "] " + p["id"].get<std::string>() + " (" +
                format_score(p["score"].get<double>()) + ")\n";
    emit(text, o.out);
    return 0;
}

int cmd_augment(const Options& o) {
    const auto config = load(o);
    const auto endpoint = config.llm ? config.llm : config.generator.endpoint;
    if (!endpoint) throw Error("augment needs an \"llm\" endpoint in the config");
    const auto collection = load_test_collection(config.data, nullptr, {config.fallback_text});
    auto limiter = std::make_shared<InFlightLimiter>(config.max_in_flight);
    RemoteChatClient client(std::make_shared<HttpJsonTransport>(*endpoint, limiter), config.generator.chat);

    std::vector<VariationRecord> records;
    std::set<std::string> seen;
    for (const auto& q : collection.questions) {
        if (q.qtype != QuestionType::Known || !seen.insert(q.topic).second) continue;
        records.push_back({q.topic, q.text, generate_paraphrases(client, q.text)});
        std::cerr << q.topic << ": " << records.back().variations.size() << " variations\n";
    }
    fs::path out = o.out.empty() ? config.paraphrases.value_or("paraphrases.jsonl") : fs::path(o.out);
    save_variations(records, out);
    std::cerr << "wrote " << out.string() << "\n";
    return 0;
}

int cmd_run_batch(const Options& o) {
    const auto config = load(o);
    if (o.out.empty()) throw Error("run-batch needs --out <dir>");
    auto engine = Engine::create(config);
    RunConfig run;
    run.pipelines = config.pipelines;
    run.cutoffs = config.cutoffs;
    run.workers = config.workers;
    run.out_dir = o.out;
    const auto artifacts = run_batch(*engine, run);
    std::size_t records = 0;
    for (const auto& r : artifacts.runs) records += r.answers.size();
    std::cerr << artifacts.runs.size() << " systems, " << records << " answer records, " << artifacts.failures
              << " failures, " << static_cast<long>(artifacts.elapsed_ms) << " ms\n";
    return 0;
}

EvalReport evaluate_dirs(const EngineConfig& config, const std::vector<std::string>& dirs) {
    ValidationReport validation;
    auto collection = load_test_collection(config.data, &validation, {config.fallback_text});
    if (!validation.ok()) throw ValidationError("test collection failed validation:\n" + validation.summary());
    std::unique_ptr<TokenEmbedder> embedder;
    if (config.bertscore.embedder == "hashed") {
        embedder = std::make_unique<HashedTokenEmbedder>(config.bertscore.dim);
    } else {
        auto engine = Engine::create(config, collection);
        embedder = engine->make_token_embedder();
    }
    std::vector<EvalReport> reports;
    for (const auto& dir : dirs)
        reports.push_back(evaluate(load_artifacts(dir), collection, *embedder, {config.gain, {}}));
    return merge_reports(reports);
}

int cmd_eval(const Options& o) {
    const auto config = load(o);
    if (o.inputs.empty()) throw Error("eval needs at least one run directory");
    emit_report(evaluate_dirs(config, o.inputs), o);
    return 0;
}

int cmd_compare(const Options& o) {
    const auto config = load(o);
    if (o.inputs.empty()) throw Error("compare needs report files or run directories");
    std::vector<EvalReport> reports;
    std::vector<std::string> dirs;
    for (const auto& in : o.inputs) {
        if (fs::is_directory(in))
            dirs.push_back(in);
        else
            reports.push_back(load_report(in));
    }
    if (!dirs.empty()) reports.push_back(evaluate_dirs(config, dirs));
    auto merged = merge_reports(reports);
    compare(merged, config.alpha);
    emit_report(merged, o);
    return 0;
}

std::atomic<httplib::Server*> g_server{nullptr};

int cmd_serve(const Options& o) {
    auto config = load(o);
    if (!o.host.empty()) config.server.host = o.host;
    if (o.port > 0) config.server.port = o.port;
    if (!o.static_dir.empty()) config.server.static_dir = fs::path(o.static_dir);

    ChatService service({config.server.default_cutoff});
    httplib::Server server;
    service.mount(server, config.server.static_dir);
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (auto* s = g_server.load()) s->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (auto* s = g_server.load()) s->stop();
    });

    std::string load_error;
    std::jthread loader([&] {
        try {
            service.attach(Engine::create(config));
            std::cerr << "engine ready\n";
        } catch (const std::exception& e) {
            load_error = e.what();
            std::cerr << "engine failed to load: " << e.what() << "\n";
            server.wait_until_ready();
            server.stop();
        }
    });
    std::cerr << "listening on http://" << config.server.host << ":" << config.server.port << "\n";
    const bool ok = server.listen(config.server.host, config.server.port);
    loader.join();
    g_server = nullptr;
    if (!load_error.empty()) return 1;
    if (!ok) {
        std::cerr << "could not listen on " << config.server.host << ":" << config.server.port << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FAQ question answering: intent-based and retrieval-augmented pipelines"};
    app.require_subcommand(1);
    Options o;

    const auto common = [&](CLI::App* cmd) {
        cmd->add_option("--config", o.config_path, "JSON config file")->capture_default_str();
        cmd->add_option("--pipeline", o.pipelines, "ib | rag-bm25 | rag-dense (repeatable)");
        cmd->add_option("--cutoff", o.cutoffs, "retrieval cutoff k (repeatable)");
        cmd->add_option("--alpha", o.alpha, "significance level");
        cmd->add_option("--format", o.format, "json | table")->check(CLI::IsMember({"json", "table"}));
        cmd->add_option("--out", o.out, "output file or directory");
    };

    auto* index = app.add_subcommand("index", "build the index and intent model, print statistics");
    auto* search = app.add_subcommand("search", "retrieve passages for a query");
    search->add_option("query", o.text, "query text")->required();
    auto* ask = app.add_subcommand("ask", "answer one question");
    ask->add_option("question", o.text, "question text")->required();
    auto* augment = app.add_subcommand("augment", "generate paraphrases of the canonical FAQ questions");
    auto* run_batch_cmd = app.add_subcommand("run-batch", "run pipelines over the test collection");
    auto* eval = app.add_subcommand("eval", "score run directories");
    eval->add_option("runs", o.inputs, "run directories")->required();
    auto* compare_cmd = app.add_subcommand("compare", "Tukey HSD across systems");
    compare_cmd->add_option("inputs", o.inputs, "report JSON files or run directories")->required();
    auto* serve = app.add_subcommand("serve", "HTTP chat service");
    serve->add_option("--host", o.host, "bind address");
    serve->add_option("--port", o.port, "port");
    serve->add_option("--static", o.static_dir, "directory of built web UI assets");
    for (auto* cmd : {index, search, ask, augment, run_batch_cmd, eval, compare_cmd, serve}) common(cmd);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*index) return cmd_index(o);
        if (*search) return cmd_search(o);
        if (*ask) return cmd_ask(o);
        if (*augment) return cmd_augment(o);
        if (*run_batch_cmd) return cmd_run_batch(o);
        if (*eval) return cmd_eval(o);
        if (*compare_cmd) return cmd_compare(o);
        if (*serve) return cmd_serve(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
