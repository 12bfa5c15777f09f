#include "gradelens/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "gradelens/error.hpp"
#include "gradelens/mock_provider.hpp"

namespace gradelens {

std::string_view to_string(ProviderKind kind) {
    switch (kind) {
    case ProviderKind::remote_api: return "remote_api";
    case ProviderKind::local_api: return "local_api";
    case ProviderKind::mock: return "mock";
    }
    return "mock";
}

std::optional<ProviderKind> parse_provider_kind(std::string_view text) {
    if (text == "remote_api") return ProviderKind::remote_api;
    if (text == "local_api") return ProviderKind::local_api;
    if (text == "mock") return ProviderKind::mock;
    return std::nullopt;
}

std::string_view to_string(WireFormat format) {
    return format == WireFormat::neutral ? "neutral" : "openai";
}

std::optional<WireFormat> parse_wire_format(std::string_view text) {
    if (text == "neutral") return WireFormat::neutral;
    if (text == "openai") return WireFormat::openai;
    return std::nullopt;
}

std::vector<std::string> validate_provider_config(const ProviderConfig& config) {
    std::vector<std::string> problems;
    if (config.provider_id.empty()) problems.emplace_back("provider_id is empty");
    if (config.max_concurrent < 1) problems.emplace_back("max_concurrent must be at least 1");
    if (config.max_retries < 0) problems.emplace_back("max_retries must not be negative");
    if (config.timeout.count() <= 0) problems.emplace_back("timeout must be positive");
    if (config.max_tokens < 1) problems.emplace_back("max_tokens must be positive");
    if (config.backoff_base.count() < 0) problems.emplace_back("backoff_base must not be negative");
    if (config.backoff_factor < 1.0) problems.emplace_back("backoff_factor must be at least 1");
    if (config.kind != ProviderKind::mock) {
        const bool http = config.endpoint.starts_with("http://") ||
                          config.endpoint.starts_with("https://");
        if (!http) problems.emplace_back("endpoint must be an http(s) URL");
    }
    return problems;
}

std::chrono::milliseconds backoff_delay(const ProviderConfig& config, int retry,
                                        double unit_draw) {
    const double cap = static_cast<double>(config.backoff_base.count()) *
                       std::pow(config.backoff_factor, static_cast<double>(retry));
    const double draw = std::clamp(unit_draw, 0.0, 1.0);
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::floor(cap * draw)));
}

std::string encode_wire_request(const ProviderConfig& config,
                                std::span<const ChatMessage> messages) {
    nlohmann::ordered_json body;
    body["model"] = config.model.empty() ? config.provider_id : config.model;
    auto& list = body["messages"] = nlohmann::ordered_json::array();
    for (const auto& m : messages) {
        list.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    body["temperature"] = config.temperature;
    body["max_tokens"] = config.max_tokens;
    return body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::optional<std::string> decode_wire_response(WireFormat format, std::string_view body) {
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    if (format == WireFormat::neutral) {
        auto it = j.find("content");
        if (it == j.end() || !it->is_string()) return std::nullopt;
        return it->get<std::string>();
    }
    auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty()) return std::nullopt;
    const auto& first = (*choices)[0];
    if (!first.is_object() || !first.contains("message")) return std::nullopt;
    const auto& message = first["message"];
    if (!message.is_object() || !message.contains("content") || !message["content"].is_string()) {
        return std::nullopt;
    }
    return message["content"].get<std::string>();
}

HttpOutcome HttplibTransport::post_json(const HttpRequest& request) {
    const auto scheme_end = request.url.find("://");
    const auto path_start =
        scheme_end == std::string::npos ? std::string::npos : request.url.find('/', scheme_end + 3);
    const std::string origin = request.url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : request.url.substr(path_start);

    httplib::Client client(origin);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);
    auto result = client.Post(path, headers, request.body, "application/json");
    if (!result) {
        const auto err = result.error();
        TransportError failure;
        failure.kind = (err == httplib::Error::Read || err == httplib::Error::Write ||
                        err == httplib::Error::ConnectionTimeout)
                           ? TransportError::Kind::timeout
                           : TransportError::Kind::connection;
        if (err == httplib::Error::Connection) failure.kind = TransportError::Kind::connection;
        failure.message = httplib::to_string(err);
        return failure;
    }
    return HttpResponse{result->status, result->body};
}

// Counting semaphore whose capacity can change when a provider is
// re-registered.
class ModelGateway::Limiter {
public:
    explicit Limiter(int capacity) : capacity_(capacity) {}

    void set_capacity(int capacity) {
        std::lock_guard lock(mutex_);
        capacity_ = capacity;
        cv_.notify_all();
    }

    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return in_flight_ < capacity_; });
        ++in_flight_;
    }

    void release() {
        std::lock_guard lock(mutex_);
        --in_flight_;
        cv_.notify_one();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int capacity_;
    int in_flight_ = 0;
};

ModelGateway::ModelGateway(std::shared_ptr<Transport> transport)
    : transport_(std::move(transport)) {}

ModelGateway::~ModelGateway() = default;

void ModelGateway::register_provider(const ProviderConfig& config) {
    const auto problems = validate_provider_config(config);
    if (!problems.empty()) {
        std::string message = "provider '" + config.provider_id + "': ";
        for (std::size_t i = 0; i < problems.size(); ++i) {
            message += (i ? "; " : "") + problems[i];
        }
        fail(ErrorCode::invalid_config, message);
    }
    std::unique_lock lock(mutex_);
    auto it = slots_.find(config.provider_id);
    if (it == slots_.end()) {
        slots_.emplace(config.provider_id,
                       Slot{config, std::make_shared<Limiter>(config.max_concurrent)});
        return;
    }
    it->second.config = config;
    it->second.limiter->set_capacity(config.max_concurrent);
}

bool ModelGateway::has_provider(std::string_view provider_id) const {
    std::shared_lock lock(mutex_);
    return slots_.find(provider_id) != slots_.end();
}

std::optional<ProviderConfig> ModelGateway::provider(std::string_view provider_id) const {
    std::shared_lock lock(mutex_);
    auto it = slots_.find(provider_id);
    if (it == slots_.end()) return std::nullopt;
    return it->second.config;
}

std::vector<ProviderConfig> ModelGateway::providers() const {
    std::shared_lock lock(mutex_);
    std::vector<ProviderConfig> out;
    for (const auto& [id, slot] : slots_) out.push_back(slot.config);
    return out;
}

ModelGateway::Slot ModelGateway::lookup(std::string_view provider_id) const {
    std::shared_lock lock(mutex_);
    auto it = slots_.find(provider_id);
    if (it == slots_.end()) {
        fail(ErrorCode::unknown_provider, "unknown provider '" + std::string(provider_id) + "'");
    }
    return it->second;
}

Completion ModelGateway::generate(std::string_view provider_id, std::string_view prompt) {
    const ChatMessage message{Role::user, std::string(prompt)};
    return generate(provider_id, std::span<const ChatMessage>(&message, 1));
}

Completion ModelGateway::generate(std::string_view provider_id,
                                  std::span<const ChatMessage> messages) {
    const auto slot = lookup(provider_id);
    if (messages.empty() || messages.back().content.empty()) {
        fail(ErrorCode::bad_request, "prompt must not be empty");
    }

    struct Permit {
        Limiter& limiter;
        explicit Permit(Limiter& l) : limiter(l) { limiter.acquire(); }
        ~Permit() { limiter.release(); }
    } permit(*slot.limiter);

    const auto started = std::chrono::steady_clock::now();
    Completion completion;
    completion.provider_id = slot.config.provider_id;
    if (slot.config.kind == ProviderKind::mock) {
        completion.text = mock_respond(messages);
        completion.attempt_count = 1;
    } else {
        completion.text = call_remote(slot.config, messages, completion.attempt_count);
    }
    completion.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    return completion;
}

std::string ModelGateway::call_remote(const ProviderConfig& config,
                                      std::span<const ChatMessage> messages, int& attempts) {
    HttpRequest request;
    request.url = config.endpoint;
    request.body = encode_wire_request(config, messages);
    request.timeout = config.timeout;
    if (!config.credentials_env.empty()) {
        const char* key = std::getenv(config.credentials_env.c_str());
        if (key == nullptr || *key == '\0') {
            fail(ErrorCode::provider_failed, "provider '" + config.provider_id +
                                                 "': environment variable " +
                                                 config.credentials_env + " is not set");
        }
        request.headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }

    thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    bool last_was_timeout = false;
    std::string last_problem;
    attempts = 0;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(backoff_delay(config, attempt - 1, unit(rng)));
        ++attempts;
        auto outcome = transport_->post_json(request);
        if (const auto* failure = std::get_if<TransportError>(&outcome)) {
            last_was_timeout = failure->kind == TransportError::Kind::timeout;
            last_problem = failure->message;
            spdlog::debug("provider {} attempt {} transport failure: {}", config.provider_id,
                          attempts, failure->message);
            continue;
        }
        const auto& response = std::get<HttpResponse>(outcome);
        if (response.status == 429 || response.status >= 500) {
            last_was_timeout = false;
            last_problem = "HTTP " + std::to_string(response.status);
            spdlog::debug("provider {} attempt {} got {}", config.provider_id, attempts,
                          response.status);
            continue;
        }
        if (response.status < 200 || response.status >= 300) {
            fail(ErrorCode::provider_failed, "provider '" + config.provider_id + "' returned HTTP " +
                                                 std::to_string(response.status));
        }
        auto text = decode_wire_response(config.wire_format, response.body);
        if (!text) {
            fail(ErrorCode::provider_failed,
                 "provider '" + config.provider_id + "' returned an unexpected response body");
        }
        return std::move(*text);
    }
    fail(last_was_timeout ? ErrorCode::timeout : ErrorCode::provider_failed,
         "provider '" + config.provider_id + "' failed after " + std::to_string(attempts) +
             " attempts: " + last_problem);
}

} // namespace gradelens
