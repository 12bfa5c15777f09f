#include "gradelens/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "gradelens/error.hpp"
#include "gradelens/json_io.hpp"

namespace gradelens {

namespace {

[[noreturn]] void invalid(const std::string& message) { fail(ErrorCode::invalid_config, message); }

void reject_unknown_keys(const Json& j, const std::set<std::string_view>& known,
                         std::string_view where) {
    if (!j.is_object()) invalid(std::string(where) + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) invalid(std::string(where) + ": unknown key '" + key + "'");
    }
}

// Field readers report bad_request; configuration problems are
// invalid_config.
template <typename F>
auto config_field(F&& read) {
    try {
        return read();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::bad_request) invalid(e.what());
        throw;
    }
}

std::size_t read_count(const Json& j, std::string_view name, std::size_t fallback) {
    if (!j.contains(name)) return fallback;
    const int value = config_field([&] { return read_int(j, name); });
    if (value < 1) invalid("'" + std::string(name) + "' must be at least 1");
    return static_cast<std::size_t>(value);
}

double read_number(const Json& j, std::string_view name, double fallback) {
    const auto it = j.find(name);
    if (it == j.end()) return fallback;
    if (!it->is_number()) invalid("'" + std::string(name) + "' must be a number");
    return it->get<double>();
}

ProviderConfig remote(std::string id, std::string env) {
    ProviderConfig c;
    c.provider_id = std::move(id);
    c.kind = ProviderKind::remote_api;
    c.endpoint = "https://api.openai.com/v1/chat/completions";
    c.credentials_env = std::move(env);
    c.wire_format = WireFormat::openai;
    return c;
}

} // namespace

std::vector<ProviderConfig> default_providers() {
    std::vector<ProviderConfig> providers;
    providers.push_back(remote("gpt-3.5-turbo", "OPENAI_API_KEY"));
    providers.push_back(remote("gpt-4o", "OPENAI_API_KEY"));

    ProviderConfig local;
    local.provider_id = "rationale-model";
    local.kind = ProviderKind::local_api;
    local.endpoint = "http://127.0.0.1:8000/v1/generate";
    local.max_concurrent = 2;
    providers.push_back(local);

    ProviderConfig mock;
    mock.provider_id = "mock";
    mock.kind = ProviderKind::mock;
    mock.max_concurrent = 64;
    providers.push_back(mock);
    return providers;
}

ServiceConfig default_config() {
    ServiceConfig config;
    config.providers = default_providers();
    return config;
}

ProviderConfig provider_from_json(const Json& j) {
    reject_unknown_keys(j,
                        {"id", "kind", "endpoint", "model", "credentials_env", "wire_format",
                         "temperature", "max_tokens", "max_concurrent", "max_retries", "timeout_ms",
                         "backoff_base_ms", "backoff_factor"},
                        "provider");
    ProviderConfig c;
    c.provider_id = config_field([&] { return read_string(j, "id"); });
    const auto kind = config_field([&] { return read_string(j, "kind"); });
    const auto parsed_kind = parse_provider_kind(kind);
    if (!parsed_kind) invalid("provider '" + c.provider_id + "': unknown kind '" + kind + "'");
    c.kind = *parsed_kind;
    c.endpoint = config_field([&] { return read_optional_string(j, "endpoint"); }).value_or("");
    c.model = config_field([&] { return read_optional_string(j, "model"); }).value_or("");
    c.credentials_env =
        config_field([&] { return read_optional_string(j, "credentials_env"); }).value_or("");
    if (const auto wire = config_field([&] { return read_optional_string(j, "wire_format"); })) {
        const auto format = parse_wire_format(*wire);
        if (!format) invalid("provider '" + c.provider_id + "': unknown wire_format '" + *wire + "'");
        c.wire_format = *format;
    }
    c.temperature = read_number(j, "temperature", c.temperature);
    auto read_or = [&](std::string_view name, int fallback) {
        return config_field([&] { return read_optional_int(j, name); }).value_or(fallback);
    };
    c.max_tokens = read_or("max_tokens", c.max_tokens);
    c.max_concurrent = read_or("max_concurrent", c.max_concurrent);
    c.max_retries = read_or("max_retries", c.max_retries);
    c.timeout = std::chrono::milliseconds(read_or("timeout_ms", static_cast<int>(c.timeout.count())));
    c.backoff_base = std::chrono::milliseconds(
        read_or("backoff_base_ms", static_cast<int>(c.backoff_base.count())));
    c.backoff_factor = read_number(j, "backoff_factor", c.backoff_factor);
    return c;
}

Json provider_to_json(const ProviderConfig& c) {
    return Json{{"id", c.provider_id},
                {"kind", to_string(c.kind)},
                {"endpoint", c.endpoint},
                {"model", c.model.empty() ? c.provider_id : c.model},
                {"credentials_env", c.credentials_env},
                {"wire_format", to_string(c.wire_format)},
                {"temperature", c.temperature},
                {"max_tokens", c.max_tokens},
                {"max_concurrent", c.max_concurrent},
                {"max_retries", c.max_retries},
                {"timeout_ms", c.timeout.count()},
                {"backoff_base_ms", c.backoff_base.count()},
                {"backoff_factor", c.backoff_factor}};
}

ServiceConfig config_from_json(const Json& j) {
    reject_unknown_keys(j,
                        {"host", "port", "database_url", "template_dir", "tagging_provider",
                         "workers", "http_threads", "chat_digest_budget", "max_upload_rows",
                         "providers"},
                        "config");
    auto config = default_config();
    auto read_str = [&](std::string_view name, std::string& target) {
        if (auto v = config_field([&] { return read_optional_string(j, name); })) target = *v;
    };
    read_str("host", config.host);
    read_str("database_url", config.database_url);
    read_str("template_dir", config.template_dir);
    read_str("tagging_provider", config.tagging_provider);
    if (j.contains("port")) config.port = config_field([&] { return read_int(j, "port"); });
    config.workers = read_count(j, "workers", config.workers);
    config.http_threads = read_count(j, "http_threads", config.http_threads);
    config.chat_digest_budget = read_count(j, "chat_digest_budget", config.chat_digest_budget);
    config.max_upload_rows = read_count(j, "max_upload_rows", config.max_upload_rows);
    if (j.contains("providers")) {
        const auto& list = j["providers"];
        if (!list.is_array()) invalid("'providers' must be an array");
        config.providers.clear();
        for (const auto& p : list) config.providers.push_back(provider_from_json(p));
    }
    return config;
}

ServiceConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) invalid("cannot read config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    const auto j = Json::parse(buffer.str(), nullptr, false);
    if (j.is_discarded()) invalid("config file " + path.string() + " is not valid JSON");
    return config_from_json(j);
}

EnvLookup process_env() {
    return [](std::string_view name) -> std::optional<std::string> {
        const char* value = std::getenv(std::string(name).c_str());
        if (value == nullptr) return std::nullopt;
        return std::string(value);
    };
}

void apply_env_overrides(ServiceConfig& config, const EnvLookup& env) {
    if (const auto port = env("PORT")) {
        const auto parsed = parse_integer_text(*port);
        if (!parsed) invalid("PORT='" + *port + "' is not an integer");
        config.port = *parsed;
    }
    if (const auto url = env("DATABASE_URL")) config.database_url = *url;
    if (const auto dir = env("TEMPLATE_DIR")) config.template_dir = *dir;
}

void validate_config(const ServiceConfig& config) {
    std::vector<std::string> problems;
    if (config.port < 0 || config.port > 65535) problems.emplace_back("port must be in [0, 65535]");
    std::set<std::string> ids;
    bool tagger = false;
    for (const auto& p : config.providers) {
        for (const auto& problem : validate_provider_config(p)) {
            problems.push_back("provider '" + p.provider_id + "': " + problem);
        }
        if (!ids.insert(p.provider_id).second) {
            problems.push_back("provider '" + p.provider_id + "' is listed twice");
        }
        tagger = tagger || p.provider_id == config.tagging_provider;
    }
    if (!tagger) problems.push_back("tagging_provider '" + config.tagging_provider + "' is not configured");
    if (!problems.empty()) {
        std::string message = "invalid configuration: ";
        for (std::size_t i = 0; i < problems.size(); ++i) message += (i ? "; " : "") + problems[i];
        invalid(message);
    }
}

} // namespace gradelens
