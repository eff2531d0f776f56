#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "engine.hpp"

namespace faqrag {

struct ServiceResponse {
    int status = 200;
    json body;
};

struct ServiceOptions {
    int default_cutoff = 3;
    std::chrono::seconds reachability_ttl{30};
};

// Single-turn question answering over a shared, immutable engine. The engine may be
// attached after construction so the server can report "not ready" while it builds.
class ChatService {
public:
    explicit ChatService(ServiceOptions options = {}) : options_(options) {}

    explicit ChatService(std::shared_ptr<const Engine> engine, ServiceOptions options = {}) : options_(options) {
        attach(std::move(engine));
    }

    void attach(std::shared_ptr<const Engine> engine) {
        std::lock_guard lock(mutex_);
        engine_ = std::move(engine);
        reachability_.reset();
    }

    std::shared_ptr<const Engine> engine() const {
        std::lock_guard lock(mutex_);
        return engine_;
    }

    ServiceResponse handle_ask(const json& request) const {
        auto engine = this->engine();
        if (!engine) return error(503, "the engine is still loading");
        if (!request.is_object()) return error(400, "request body must be a JSON object");

        const auto question_text = request.value("question", json(nullptr));
        if (!question_text.is_string() || trim(question_text.get<std::string>()).empty())
            return error(400, "question must be a non-empty string");
        const auto mode_value = request.value("mode", json("ib"));
        std::optional<Pipeline> mode;
        if (mode_value.is_string()) mode = parse_pipeline(mode_value.get<std::string>());
        const auto& offered = engine->config().pipelines;
        if (!mode || std::find(offered.begin(), offered.end(), *mode) == offered.end())
            return error(400, "unknown mode");
        const auto cutoff_value = request.value("cutoff", json(options_.default_cutoff));
        if (!cutoff_value.is_number_integer()) return error(400, "cutoff must be an integer");
        const int cutoff = cutoff_value.get<int>();
        if (!engine->config().cutoffs.contains(cutoff)) return error(400, "cutoff is not among the offered values");

        Question q;
        q.id = "ask";
        q.text = trim(question_text.get<std::string>());
        PipelineOutcome out;
        try {
            out = engine->answer(*mode, q, cutoff);
        } catch (const TransportError& e) {
            return error(502, e.what());
        }

        json passages = json::array();
        const auto& corpus = engine->collection().passages;
        for (std::size_t i = 0; i < out.ranking.entries.size(); ++i) {
            const auto& e = out.ranking.entries[i];
            passages.push_back({{"id", e.passage_id},
                                {"text", corpus.at(e.passage_id).text},
                                {"score", e.score},
                                {"rank", i + 1}});
        }
        return {200,
                {{"answer", out.answer.text},
                 {"answered", out.answer.answered},
                 {"passages", passages},
                 {"mode", to_string(*mode)},
                 {"cutoff", *mode == Pipeline::IB ? 1 : cutoff},
                 {"timings", {{"retrieval_ms", out.retrieval_ms}, {"generation_ms", out.generation_ms}}}}};
    }

    ServiceResponse handle_modes() const {
        auto engine = this->engine();
        if (!engine) return error(503, "the engine is still loading");
        json modes = json::array();
        for (auto p : engine->config().pipelines) modes.push_back(to_string(p));
        return {200, {{"modes", modes}, {"cutoffs", engine->config().cutoffs}}};
    }

    ServiceResponse handle_health() const {
        auto engine = this->engine();
        if (!engine)
            return {200,
                    {{"ready", false},
                     {"degraded", false},
                     {"components", {{"index", "loading"}, {"intent_model", "loading"}, {"generator", "loading"}}}}};
        const bool remote = engine->generator().remote();
        const bool reachable = !remote || generator_reachable(*engine);
        json generator = {{"id", engine->generator().id()}, {"remote", remote}, {"reachable", reachable}};
        return {200,
                {{"ready", true},
                 {"degraded", !reachable},
                 {"components",
                  {{"index", {{"status", "ok"}, {"passages", engine->index().doc_count()}}},
                   {"vector_store", {{"status", "ok"}, {"dim", engine->store().dim()}}},
                   {"intent_model", {{"status", "ok"}, {"intents", engine->intent_model().intents().size()}}},
                   {"generator", generator}}}}};
    }

    void mount(httplib::Server& server, const std::optional<std::filesystem::path>& static_dir = std::nullopt) const {
        const auto reply = [](httplib::Response& res, const ServiceResponse& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        server.Post("/api/ask", [this, reply](const httplib::Request& req, httplib::Response& res) {
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::parse_error&) {
                return reply(res, error(400, "request body is not valid JSON"));
            }
            reply(res, handle_ask(body));
        });
        server.Get("/api/modes", [this, reply](const httplib::Request&, httplib::Response& res) {
            reply(res, handle_modes());
        });
        server.Get("/api/health", [this, reply](const httplib::Request&, httplib::Response& res) {
            reply(res, handle_health());
        });
        if (static_dir) {
            if (!server.set_mount_point("/", static_dir->string()))
                throw Error("static directory " + static_dir->string() + " does not exist");
        }
        server.set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string what = "internal error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                what = e.what();
            } catch (...) {
            }
            reply(res, error(500, what));
        });
    }

    static ServiceResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

private:
    bool generator_reachable(const Engine& engine) const {
        const auto now = std::chrono::steady_clock::now();
        {
            std::lock_guard lock(mutex_);
            if (reachability_ && now - reachability_->second < options_.reachability_ttl) return reachability_->first;
        }
        const bool ok = engine.generator().reachable();
        std::lock_guard lock(mutex_);
        reachability_ = std::make_pair(ok, now);
        return ok;
    }

    ServiceOptions options_;
    mutable std::mutex mutex_;
    std::shared_ptr<const Engine> engine_;
    mutable std::optional<std::pair<bool, std::chrono::steady_clock::time_point>> reachability_;
};

}  // namespace faqrag
