#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.
// The oracles deliberately avoid the library's own helpers.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradelens/gateway.hpp"
#include "gradelens/model.hpp"

namespace fixtures {

using gradelens::Question;
using gradelens::RubricItem;
using gradelens::StudentAnswer;

inline Question sample_question(std::string id = "q1") {
    Question q;
    q.id = std::move(id);
    q.prompt_text =
        "After reading the group's procedure, describe what additional information you would need "
        "in order to replicate the experiment.";
    q.key_elements = {
        "specify the materials to be tested",
        "describe the size and surface area of each container",
        "state how long each sample was rinsed in water",
    };
    q.rubric = {
        {3, "describes three additional pieces of information"},
        {2, "describes two additional pieces of information"},
        {1, "describes one additional piece of information"},
        {0, "describes little or no accurate information"},
    };
    q.max_mark = 3;
    return q;
}

// Two-element, two-mark question used where small numbers keep hand
// computations readable.
inline Question small_question(std::string id = "q-small") {
    Question q;
    q.id = std::move(id);
    q.prompt_text = "Why do plants need sunlight?";
    q.key_elements = {"sunlight powers photosynthesis", "photosynthesis produces glucose sugar"};
    q.rubric = {{1, "one element"}, {2, "both elements"}};
    q.max_mark = 2;
    return q;
}

inline StudentAnswer answer(std::string id, std::string question_id, std::string text,
                            std::optional<int> gold = std::nullopt) {
    return StudentAnswer{std::move(id), std::move(question_id), std::move(text), gold};
}

// Answer i covers the sample question's elements whose bit is set in i.
inline std::vector<StudentAnswer> sample_answers(const Question& q, int count) {
    static const char* fragments[] = {
        "You would need to specify which materials were tested.",
        "Describe the size and surface area of each container used.",
        "State how long each sample was rinsed in distilled water.",
    };
    std::vector<StudentAnswer> out;
    for (int i = 0; i < count; ++i) {
        std::string text = "Answer " + std::to_string(i) + ":";
        for (int k = 0; k < 3; ++k) {
            if ((i >> k) & 1) text += std::string(" ") + fragments[k];
        }
        if (text.find('.') == std::string::npos) text += " I am not sure what else is needed.";
        char id[16];
        std::snprintf(id, sizeof id, "a%03d", i);
        // where present, the gold mark equals the number of covered elements
        std::optional<int> gold;
        if (i % 3 != 2) gold = std::popcount(static_cast<unsigned>(i & 7));
        out.push_back(answer(id, q.id, text, gold));
    }
    return out;
}

// Independent statement of the mock scoring rule: an element counts when at
// least half of its words of four or more letters (after lowercasing and
// dropping punctuation) occur among the answer's words.
inline std::string oracle_clean(const std::string& token) {
    std::string out;
    for (unsigned char c : token) {
        if (c < 0x80 && std::ispunct(c)) continue;
        out.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
    return out;
}

inline int oracle_mock_mark(const Question& q, const std::string& answer_text) {
    std::istringstream answer_stream(answer_text);
    std::vector<std::string> answer_words;
    for (std::string t; answer_stream >> t;) answer_words.push_back(oracle_clean(t));
    int matched = 0;
    for (const auto& element : q.key_elements) {
        std::istringstream element_stream(element);
        int total = 0;
        int hits = 0;
        for (std::string t; element_stream >> t;) {
            const auto w = oracle_clean(t);
            if (w.size() < 4) continue;
            ++total;
            if (std::find(answer_words.begin(), answer_words.end(), w) != answer_words.end()) ++hits;
        }
        if (total > 0 && hits * 2 >= total) ++matched;
    }
    return std::min(matched, q.max_mark);
}

// Quadratic weighted kappa as a double sum over items:
// kappa = 1 - sum_k w(g_k, p_k) / ((1/n) sum_k sum_l w(g_k, p_l)).
inline double brute_force_qwk(const std::vector<int>& gold, const std::vector<int>& pred,
                              int num_classes) {
    const auto n = gold.size();
    const double denom_scale = static_cast<double>(num_classes - 1) * (num_classes - 1);
    auto w = [&](int a, int b) { return static_cast<double>((a - b) * (a - b)) / denom_scale; };
    double observed = 0;
    for (std::size_t k = 0; k < n; ++k) observed += w(gold[k], pred[k]);
    double expected = 0;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) expected += w(gold[k], pred[l]);
    }
    expected /= static_cast<double>(n);
    if (expected == 0.0) return observed == 0.0 ? 1.0 : 0.0;
    return 1.0 - observed / expected;
}

// Scripted transport: replies are consumed in order, the last one repeats.
// Records every request and the peak number of concurrent calls.
class FakeTransport : public gradelens::Transport {
public:
    using Reply = gradelens::HttpOutcome;

    explicit FakeTransport(std::vector<Reply> script = {}, std::chrono::milliseconds delay = {})
        : script_(std::move(script)), delay_(delay) {}

    static Reply ok(const std::string& content) {
        nlohmann::json body{{"content", content}};
        return gradelens::HttpResponse{200, body.dump()};
    }
    static Reply status(int code) { return gradelens::HttpResponse{code, "{}"}; }
    static Reply timeout() {
        return gradelens::TransportError{gradelens::TransportError::Kind::timeout, "timed out"};
    }
    static Reply refused() {
        return gradelens::TransportError{gradelens::TransportError::Kind::connection, "refused"};
    }

    // Computes a reply from the request instead of the script.
    std::function<Reply(const gradelens::HttpRequest&)> responder;

    gradelens::HttpOutcome post_json(const gradelens::HttpRequest& request) override {
        const int now_in_flight = ++in_flight_;
        {
            std::lock_guard lock(mutex_);
            peak_ = std::max(peak_, now_in_flight);
            requests_.push_back(request);
        }
        if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
        Reply reply = gradelens::HttpResponse{500, "{}"};
        {
            std::lock_guard lock(mutex_);
            if (responder) {
                reply = responder(request);
            } else if (!script_.empty()) {
                reply = script_[std::min(next_, script_.size() - 1)];
                ++next_;
            }
        }
        --in_flight_;
        return reply;
    }

    std::vector<gradelens::HttpRequest> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }
    int peak() const {
        std::lock_guard lock(mutex_);
        return peak_;
    }

private:
    mutable std::mutex mutex_;
    std::vector<Reply> script_;
    std::size_t next_ = 0;
    std::chrono::milliseconds delay_;
    std::atomic<int> in_flight_{0};
    int peak_ = 0;
    std::vector<gradelens::HttpRequest> requests_;
};

inline gradelens::ProviderConfig mock_provider(std::string id = "mock") {
    gradelens::ProviderConfig c;
    c.provider_id = std::move(id);
    c.kind = gradelens::ProviderKind::mock;
    c.max_concurrent = 16;
    return c;
}

inline gradelens::ProviderConfig remote_provider(std::string id, int max_concurrent = 4) {
    gradelens::ProviderConfig c;
    c.provider_id = std::move(id);
    c.kind = gradelens::ProviderKind::remote_api;
    c.endpoint = "http://provider.invalid/v1/chat";
    c.max_concurrent = max_concurrent;
    c.backoff_base = std::chrono::milliseconds(1);
    return c;
}

// Unique path under the system temp directory, removed on destruction.
class TempPath {
public:
    explicit TempPath(const std::string& stem) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (stem + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    }
    ~TempPath() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
        for (const char* suffix : {"-wal", "-shm", "-journal"}) {
            std::filesystem::remove(path_.string() + suffix, ec);
        }
    }
    const std::filesystem::path& path() const { return path_; }
    std::string string() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

// Random printable text with irregular whitespace, used by the highlight fuzz.
inline std::string random_text(std::mt19937_64& rng, std::size_t words) {
    static const std::vector<std::string> vocabulary = {
        "The", "cat", "sat", "on", "the", "mat", "materials", "tested", "Container", "size",
        "surface", "area", "rinse", "water", "vinegar", "sample", "mass", "é", "naïve", "x",
        "experiment", "repeat", "measure", "dry", "(label)", "end.", "Start,", "42"};
    static const std::vector<std::string> gaps = {" ", " ", " ", "  ", "\n", "\t", " \n "};
    std::uniform_int_distribution<std::size_t> pick_word(0, vocabulary.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_gap(0, gaps.size() - 1);
    std::string out;
    for (std::size_t i = 0; i < words; ++i) {
        if (i > 0) out += gaps[pick_gap(rng)];
        out += vocabulary[pick_word(rng)];
    }
    return out;
}

} // namespace fixtures
