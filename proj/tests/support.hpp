#pragma once

#include <atomic>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <faqrag/faqrag.hpp>

namespace testing_support {

namespace fs = std::filesystem;

inline fs::path source_dir() { return fs::path(FAQRAG_SOURCE_DIR); }
inline fs::path data_dir() { return source_dir() / "data"; }
inline fs::path fixture(const std::string& name) { return source_dir() / "tests" / "fixtures" / name; }

inline faqrag::EngineConfig testbed_config() { return faqrag::load_config(data_dir() / "config.json"); }

inline faqrag::TestCollection testbed() {
    faqrag::ValidationReport report;
    return faqrag::load_test_collection(testbed_config().data, &report);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("faqrag-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

// Transport replaying canned responses and recording every request body.
class ScriptedTransport : public faqrag::JsonTransport {
public:
    using Handler = std::function<faqrag::json(const faqrag::json&)>;

    explicit ScriptedTransport(Handler handler, std::string name = "scripted")
        : handler_(std::move(handler)), name_(std::move(name)) {}

    faqrag::json post(const faqrag::json& body) override {
        {
            std::lock_guard lock(mutex_);
            requests_.push_back(body);
        }
        return handler_(body);
    }

    bool reachable() override { return reachable_; }
    std::string describe() const override { return name_; }

    std::vector<faqrag::json> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }

    bool reachable_ = true;

private:
    Handler handler_;
    std::string name_;
    mutable std::mutex mutex_;
    std::vector<faqrag::json> requests_;
};

inline faqrag::PassageCorpus corpus_of(const std::vector<std::pair<std::string, std::string>>& docs) {
    faqrag::PassageCorpus c;
    for (const auto& [id, text] : docs) c.add({id, text, std::nullopt});
    return c;
}

}  // namespace testing_support
