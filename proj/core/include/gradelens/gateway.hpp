#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gradelens/model.hpp"

namespace gradelens {

enum class ProviderKind { remote_api, local_api, mock };

// Response shape spoken by the provider endpoint. Requests always use the
// neutral chat-completion body, which OpenAI-compatible servers accept too.
enum class WireFormat { neutral, openai };

std::string_view to_string(ProviderKind kind);
std::optional<ProviderKind> parse_provider_kind(std::string_view text);
std::string_view to_string(WireFormat format);
std::optional<WireFormat> parse_wire_format(std::string_view text);

struct ProviderConfig {
    std::string provider_id;
    ProviderKind kind = ProviderKind::mock;
    std::string endpoint;
    // Model name sent on the wire; defaults to provider_id.
    std::string model;
    // Name of the environment variable holding the API key. Keys are never
    // persisted.
    std::string credentials_env;
    WireFormat wire_format = WireFormat::neutral;
    double temperature = 0.0;
    int max_tokens = 1024;
    int max_concurrent = 4;
    int max_retries = 3;
    std::chrono::milliseconds timeout{60'000};
    std::chrono::milliseconds backoff_base{500};
    double backoff_factor = 2.0;
};

// Empty when the config is usable.
std::vector<std::string> validate_provider_config(const ProviderConfig& config);

struct Completion {
    std::string text;
    std::string provider_id;
    std::chrono::milliseconds latency{0};
    int attempt_count = 1;
};

struct HttpRequest {
    std::string url;
    std::string body;
    std::vector<std::pair<std::string, std::string>> headers;
    std::chrono::milliseconds timeout{60'000};
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

struct TransportError {
    enum class Kind { connection, timeout } kind = Kind::connection;
    std::string message;
};

using HttpOutcome = std::variant<HttpResponse, TransportError>;

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpOutcome post_json(const HttpRequest& request) = 0;
};

// cpp-httplib client; one connection per request.
class HttplibTransport final : public Transport {
public:
    HttpOutcome post_json(const HttpRequest& request) override;
};

// Full-jitter exponential backoff: uniform in [0, base * factor^retry].
std::chrono::milliseconds backoff_delay(const ProviderConfig& config, int retry, double unit_draw);

class ModelGateway {
public:
    explicit ModelGateway(std::shared_ptr<Transport> transport = std::make_shared<HttplibTransport>());
    ~ModelGateway();

    ModelGateway(const ModelGateway&) = delete;
    ModelGateway& operator=(const ModelGateway&) = delete;

    // Replaces an existing provider with the same id. Throws
    // Error(invalid_config).
    void register_provider(const ProviderConfig& config);
    bool has_provider(std::string_view provider_id) const;
    std::optional<ProviderConfig> provider(std::string_view provider_id) const;
    std::vector<ProviderConfig> providers() const;

    // Single user turn.
    Completion generate(std::string_view provider_id, std::string_view prompt);
    // Throws Error(unknown_provider | provider_failed | timeout).
    Completion generate(std::string_view provider_id, std::span<const ChatMessage> messages);

private:
    class Limiter;
    struct Slot {
        ProviderConfig config;
        std::shared_ptr<Limiter> limiter;
    };

    Slot lookup(std::string_view provider_id) const;
    std::string call_remote(const ProviderConfig& config, std::span<const ChatMessage> messages,
                            int& attempts);

    std::shared_ptr<Transport> transport_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, Slot, std::less<>> slots_;
};

// Request body in the neutral wire format.
std::string encode_wire_request(const ProviderConfig& config, std::span<const ChatMessage> messages);
// Extracts the completion text; nullopt when the body has the wrong shape.
std::optional<std::string> decode_wire_response(WireFormat format, std::string_view body);

} // namespace gradelens
