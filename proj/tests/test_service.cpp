#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"

using namespace faqrag;
using testing_support::ScriptedTransport;

namespace {

std::shared_ptr<const Engine> shared_engine() {
    static const std::shared_ptr<const Engine> engine = Engine::create(testing_support::testbed_config());
    return engine;
}

const Question& first_of(QuestionType t) {
    static const auto c = testing_support::testbed();
    for (const auto& q : c.questions)
        if (q.qtype == t) return q;
    throw Error("no question of that type");
}

// Remote generator whose endpoint is scripted: either down or replying with `reply`.
std::shared_ptr<Engine> engine_with_remote(std::shared_ptr<ScriptedTransport> transport) {
    EngineOverrides o;
    o.generator = std::make_shared<RemoteGenerator>(std::make_shared<RemoteChatClient>(transport));
    return Engine::create(testing_support::testbed_config(), testing_support::testbed(), o);
}

// Server on an ephemeral localhost port for the lifetime of the object.
class LiveServer {
public:
    explicit LiveServer(const ChatService& service, std::optional<std::filesystem::path> static_dir = std::nullopt) {
        service.mount(server_, static_dir);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::jthread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LiveServer() { server_.stop(); }

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(std::chrono::seconds(30));
        return c;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::jthread thread_;
};

json without_timings(json body) {
    body.erase("timings");
    return body;
}

}  // namespace

TEST(Service, KnownQuestionInIbModeHasOneProvenancePassage) {
    ChatService service(shared_engine());
    const auto& q = first_of(QuestionType::Known);
    const auto r = service.handle_ask({{"question", q.text}, {"mode", "ib"}});
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_TRUE(r.body["answered"].get<bool>());
    ASSERT_EQ(r.body["passages"].size(), 1u);
    const auto& p = r.body["passages"][0];
    EXPECT_EQ(p["rank"], 1);
    EXPECT_EQ(p["text"], r.body["answer"]);
    EXPECT_EQ(p["id"], shared_engine()->collection().gold_answer(q).source_passage_ids.front());
    EXPECT_EQ(r.body["mode"], "ib");
    EXPECT_TRUE(r.body["timings"].contains("retrieval_ms"));
    EXPECT_TRUE(r.body["timings"].contains("generation_ms"));
}

TEST(Service, GibberishInIbModeFallsBack) {
    ChatService service(shared_engine());
    const auto r = service.handle_ask({{"question", "xqzzy blorp"}, {"mode", "ib"}});
    ASSERT_EQ(r.status, 200);
    EXPECT_FALSE(r.body["answered"].get<bool>());
    EXPECT_EQ(r.body["answer"], std::string(kFallbackAnswer));
    EXPECT_TRUE(r.body["passages"].empty());
}

TEST(Service, RagModeReturnsRankedPassagesWithinCutoff) {
    ChatService service(shared_engine());
    for (const auto* mode : {"rag-bm25", "rag-dense"}) {
        const auto r = service.handle_ask({{"question", first_of(QuestionType::Inferred).text}, {"mode", mode}, {"cutoff", 3}});
        ASSERT_EQ(r.status, 200) << r.body.dump();
        const auto& passages = r.body["passages"];
        ASSERT_LE(passages.size(), 3u);
        ASSERT_GT(passages.size(), 0u);
        for (std::size_t i = 0; i < passages.size(); ++i) {
            EXPECT_EQ(passages[i]["rank"], i + 1);
            EXPECT_TRUE(shared_engine()->collection().passages.contains(passages[i]["id"].get<std::string>()));
            if (i > 0) EXPECT_GE(passages[i - 1]["score"].get<double>(), passages[i]["score"].get<double>());
        }
        EXPECT_EQ(r.body["mode"], mode);
        EXPECT_EQ(r.body["cutoff"], 3);
    }
}

TEST(Service, DefaultsAreIbModeAndCutoffThree) {
    ChatService service(shared_engine());
    const auto r = service.handle_ask({{"question", first_of(QuestionType::Known).text}});
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body["mode"], "ib");
    const auto rag = service.handle_ask({{"question", "When are exams?"}, {"mode", "rag-bm25"}});
    EXPECT_EQ(rag.body["cutoff"], 3);
}

TEST(Service, IdenticalRequestsGiveIdenticalBodies) {
    ChatService service(shared_engine());
    const json request = {{"question", first_of(QuestionType::Known).text}, {"mode", "rag-bm25"}, {"cutoff", 5}};
    const auto a = service.handle_ask(request);
    service.handle_ask({{"question", "something else entirely"}, {"mode", "rag-dense"}, {"cutoff", 1}});
    const auto b = service.handle_ask(request);
    EXPECT_EQ(without_timings(a.body), without_timings(b.body));
}

TEST(Service, BadRequestsAre400) {
    ChatService service(shared_engine());
    EXPECT_EQ(service.handle_ask(json::array()).status, 400);
    EXPECT_EQ(service.handle_ask({{"question", "   "}}).status, 400);
    EXPECT_EQ(service.handle_ask({{"question", 7}}).status, 400);
    EXPECT_EQ(service.handle_ask({{"mode", "ib"}}).status, 400);
    EXPECT_EQ(service.handle_ask({{"question", "hi"}, {"mode", "rag-bm42"}}).status, 400);
    EXPECT_EQ(service.handle_ask({{"question", "hi"}, {"mode", 3}}).status, 400);
    EXPECT_EQ(service.handle_ask({{"question", "hi"}, {"mode", "rag-bm25"}, {"cutoff", 2}}).status, 400);
    EXPECT_EQ(service.handle_ask({{"question", "hi"}, {"mode", "rag-bm25"}, {"cutoff", "3"}}).status, 400);
    EXPECT_TRUE(service.handle_ask(json::array()).body.contains("error"));
}

TEST(Service, ModeNotOfferedIs400) {
    auto config = testing_support::testbed_config();
    config.pipelines = {Pipeline::IB};
    ChatService service(Engine::create(config));
    EXPECT_EQ(service.handle_ask({{"question", "hi"}, {"mode", "rag-bm25"}}).status, 400);
    EXPECT_EQ(service.handle_modes().body["modes"], json({"ib"}));
}

TEST(Service, BackendFailureIs502) {
    auto transport = std::make_shared<ScriptedTransport>([](const json&) -> json {
        throw TransportError("generator endpoint returned HTTP 503", 503);
    });
    ChatService service(engine_with_remote(transport));
    const auto r = service.handle_ask({{"question", first_of(QuestionType::Known).text}, {"mode", "rag-bm25"}, {"cutoff", 1}});
    EXPECT_EQ(r.status, 502);
    EXPECT_NE(r.body["error"].get<std::string>().find("503"), std::string::npos);
    // The intent-based path never touches the generator.
    EXPECT_EQ(service.handle_ask({{"question", "xqzzy"}, {"mode", "ib"}}).status, 200);
}

TEST(Service, RemoteGeneratorRefusalIsUnanswered) {
    auto transport = std::make_shared<ScriptedTransport>(
        [](const json&) { return json{{"choices", {{{"message", {{"content", "NA"}}}}}}}; });
    ChatService service(engine_with_remote(transport));
    const auto r = service.handle_ask({{"question", "Where can I park?"}, {"mode", "rag-bm25"}, {"cutoff", 3}});
    ASSERT_EQ(r.status, 200);
    EXPECT_FALSE(r.body["answered"].get<bool>());
    EXPECT_EQ(r.body["answer"], std::string(kFallbackAnswer));
    EXPECT_EQ(transport->requests().size(), 1u);
}

TEST(Service, ModesListsPipelinesAndCutoffs) {
    ChatService service(shared_engine());
    const auto r = service.handle_modes();
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body["modes"], json({"ib", "rag-bm25", "rag-dense"}));
    EXPECT_EQ(r.body["cutoffs"], json({1, 3, 5}));
}

TEST(Service, HealthBeforeAndAfterAttach) {
    ChatService service;
    auto h = service.handle_health();
    EXPECT_EQ(h.status, 200);
    EXPECT_FALSE(h.body["ready"].get<bool>());
    EXPECT_EQ(service.handle_ask({{"question", "hi"}}).status, 503);
    EXPECT_EQ(service.handle_modes().status, 503);

    service.attach(shared_engine());
    h = service.handle_health();
    EXPECT_TRUE(h.body["ready"].get<bool>());
    EXPECT_FALSE(h.body["degraded"].get<bool>());
    EXPECT_EQ(h.body["components"]["index"]["passages"], 120);
    EXPECT_EQ(h.body["components"]["intent_model"]["intents"], 28);
}

TEST(Service, UnreachableRemoteGeneratorIsDegradedButReady) {
    auto transport = std::make_shared<ScriptedTransport>([](const json&) { return json::object(); });
    transport->reachable_ = false;
    ChatService service(engine_with_remote(transport), {3, std::chrono::seconds(0)});
    auto h = service.handle_health();
    EXPECT_TRUE(h.body["ready"].get<bool>());
    EXPECT_TRUE(h.body["degraded"].get<bool>());
    EXPECT_FALSE(h.body["components"]["generator"]["reachable"].get<bool>());
    transport->reachable_ = true;
    h = service.handle_health();
    EXPECT_FALSE(h.body["degraded"].get<bool>());
}

TEST(Service, ReachabilityIsCached) {
    auto transport = std::make_shared<ScriptedTransport>([](const json&) { return json::object(); });
    transport->reachable_ = false;
    ChatService service(engine_with_remote(transport), {3, std::chrono::seconds(3600)});
    EXPECT_TRUE(service.handle_health().body["degraded"].get<bool>());
    transport->reachable_ = true;
    EXPECT_TRUE(service.handle_health().body["degraded"].get<bool>());
}

TEST(ServiceHttp, EndpointsOverLocalhost) {
    ChatService service(shared_engine());
    LiveServer server(service);
    auto client = server.client();

    auto res = client.Post("/api/ask", json{{"question", first_of(QuestionType::Known).text}, {"mode", "ib"}}.dump(),
                           "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->get_header_value("Content-Type"), "application/json");
    const auto body = json::parse(res->body);
    for (const auto* key : {"answer", "answered", "passages", "mode", "timings"}) EXPECT_TRUE(body.contains(key)) << key;

    res = client.Post("/api/ask", "{not json", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400);

    res = client.Post("/api/ask", json{{"question", ""}}.dump(), "application/json");
    EXPECT_EQ(res->status, 400);

    res = client.Get("/api/modes");
    ASSERT_TRUE(res);
    EXPECT_EQ(json::parse(res->body)["cutoffs"], json({1, 3, 5}));

    res = client.Get("/api/health");
    ASSERT_TRUE(res);
    EXPECT_TRUE(json::parse(res->body)["ready"].get<bool>());

    res = client.Get("/api/nothing");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 404);
}

TEST(ServiceHttp, NotReadyServerAnswers503AndServesStaticFiles) {
    testing_support::TempDir dir;
    std::ofstream(dir / "index.html") << "<html>chat</html>";
    ChatService service;
    LiveServer server(service, dir.path());
    auto client = server.client();
    auto res = client.Get("/api/health");
    ASSERT_TRUE(res);
    EXPECT_FALSE(json::parse(res->body)["ready"].get<bool>());
    res = client.Post("/api/ask", R"({"question":"hi"})", "application/json");
    EXPECT_EQ(res->status, 503);
    res = client.Get("/index.html");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->body, "<html>chat</html>");
    res = client.Get("/");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
}

TEST(ServiceHttp, MissingStaticDirectoryIsAnError) {
    ChatService service;
    httplib::Server server;
    EXPECT_THROW(service.mount(server, std::filesystem::path("/nonexistent/ui")), Error);
}

TEST(ServiceHttp, ConcurrentRequestsAgree) {
    ChatService service(shared_engine());
    LiveServer server(service);
    const json request = {{"question", first_of(QuestionType::Known).text}, {"mode", "rag-dense"}, {"cutoff", 5}};
    const auto expected = without_timings(service.handle_ask(request).body);
    std::vector<std::jthread> threads;
    std::atomic<int> agreed{0};
    for (int i = 0; i < 8; ++i)
        threads.emplace_back([&] {
            auto client = server.client();
            auto res = client.Post("/api/ask", request.dump(), "application/json");
            if (res && res->status == 200 && without_timings(json::parse(res->body)) == expected) ++agreed;
        });
    threads.clear();
    EXPECT_EQ(agreed.load(), 8);
}
