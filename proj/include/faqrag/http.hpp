#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "error.hpp"

namespace faqrag {

using json = nlohmann::json;

struct RetryPolicy {
    int max_attempts = 4;  // including the first
    std::chrono::milliseconds initial_backoff{200};
    double multiplier = 2.0;
    std::chrono::milliseconds max_backoff{5000};

    std::chrono::milliseconds backoff_for(int attempt) const {  // attempt is 1-based
        double ms = static_cast<double>(initial_backoff.count());
        for (int i = 1; i < attempt; ++i) ms *= multiplier;
        return std::chrono::milliseconds(
            static_cast<long long>(std::min(ms, static_cast<double>(max_backoff.count()))));
    }
};

inline bool is_retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

// Counting semaphore with a runtime limit, shared by every client talking to remote
// endpoints so batch and service traffic respect one in-flight cap.
class InFlightLimiter {
public:
    explicit InFlightLimiter(int limit) : available_(std::max(limit, 1)) {}

    class Slot {
    public:
        explicit Slot(InFlightLimiter* owner) : owner_(owner) {}
        Slot(Slot&& other) noexcept : owner_(std::exchange(other.owner_, nullptr)) {}
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;
        Slot& operator=(Slot&&) = delete;
        ~Slot() {
            if (owner_) owner_->release();
        }

    private:
        InFlightLimiter* owner_;
    };

    Slot acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return available_ > 0; });
        --available_;
        return Slot(this);
    }

private:
    void release() {
        {
            std::lock_guard lock(mutex_);
            ++available_;
        }
        cv_.notify_one();
    }

    std::mutex mutex_;
    std::condition_variable cv_;
    int available_;
};

class JsonTransport {
public:
    virtual ~JsonTransport() = default;
    virtual json post(const json& body) = 0;
    // Cheap reachability check; never throws.
    virtual bool reachable() { return true; }
    virtual std::string describe() const = 0;
};

struct HttpEndpoint {
    std::string url;  // scheme://host[:port]/path
    std::string api_key_env;  // name of an environment variable holding a bearer token
    std::chrono::seconds timeout{60};
    RetryPolicy retry;
};

struct ParsedUrl {
    std::string base;  // scheme://host[:port]
    std::string path;
};

inline ParsedUrl split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw Error("endpoint url needs a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

// Performs one POST and returns {status, body}; status 0 means a connection-level failure.
using HttpPostFn = std::function<std::pair<int, std::string>(const HttpEndpoint&, const std::string& body)>;

inline HttpPostFn default_http_post() {
    return [](const HttpEndpoint& endpoint, const std::string& body) -> std::pair<int, std::string> {
        const auto url = split_url(endpoint.url);
        httplib::Client client(url.base);
        client.set_connection_timeout(std::chrono::seconds(10));
        client.set_read_timeout(endpoint.timeout);
        client.set_write_timeout(endpoint.timeout);
        httplib::Headers headers;
        if (!endpoint.api_key_env.empty()) {
            if (const char* key = std::getenv(endpoint.api_key_env.c_str()); key && *key)
                headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        auto res = client.Post(url.path, headers, body, "application/json");
        if (!res) return {0, "connection failed: " + httplib::to_string(res.error())};
        return {res->status, res->body};
    };
}

class HttpJsonTransport : public JsonTransport {
public:
    HttpJsonTransport(HttpEndpoint endpoint, std::shared_ptr<InFlightLimiter> limiter = nullptr,
                      HttpPostFn post_fn = default_http_post())
        : endpoint_(std::move(endpoint)), limiter_(std::move(limiter)), post_fn_(std::move(post_fn)) {}

    json post(const json& body) override {
        const std::string payload = body.dump();
        std::string last_error;
        int last_status = 0;
        for (int attempt = 1; attempt <= endpoint_.retry.max_attempts; ++attempt) {
            std::pair<int, std::string> result;
            {
                std::optional<InFlightLimiter::Slot> slot;
                if (limiter_) slot.emplace(limiter_->acquire());
                result = post_fn_(endpoint_, payload);
            }
            const auto& [status, text] = result;
            if (status >= 200 && status < 300) {
                try {
                    return json::parse(text);
                } catch (const json::parse_error& e) {
                    throw TransportError(endpoint_.url + ": response is not JSON: " + e.what(), status);
                }
            }
            last_status = status;
            last_error = status == 0 ? text : "HTTP " + std::to_string(status) + ": " + text.substr(0, 200);
            if (status != 0 && !is_retryable_status(status)) break;
            if (attempt < endpoint_.retry.max_attempts)
                std::this_thread::sleep_for(endpoint_.retry.backoff_for(attempt));
        }
        throw TransportError(endpoint_.url + ": " + last_error, last_status);
    }

    bool reachable() override {
        try {
            auto [status, text] = post_fn_(endpoint_, "{}");
            return status != 0;
        } catch (...) {
            return false;
        }
    }

    std::string describe() const override { return endpoint_.url; }

private:
    HttpEndpoint endpoint_;
    std::shared_ptr<InFlightLimiter> limiter_;
    HttpPostFn post_fn_;
};

}  // namespace faqrag
