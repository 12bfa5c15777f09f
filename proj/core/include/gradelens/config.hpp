#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradelens/gateway.hpp"

namespace gradelens {

struct ServiceConfig {
    std::string host = "0.0.0.0";
    int port = 8080;
    // see open_store()
    std::string database_url = "memory:";
    // empty = built-in templates
    std::string template_dir;
    std::string tagging_provider = "mock";
    std::size_t workers = 8;
    std::size_t http_threads = 8;
    std::size_t chat_digest_budget = 4000;
    std::size_t max_upload_rows = 10'000;
    std::vector<ProviderConfig> providers;
};

// Two OpenAI models, a locally served model speaking the neutral wire format,
// and the mock.
std::vector<ProviderConfig> default_providers();
ServiceConfig default_config();

ProviderConfig provider_from_json(const nlohmann::json& j);
nlohmann::json provider_to_json(const ProviderConfig& config);

// Keys not listed here are rejected. A "providers" array replaces the
// default providers. Throws Error(invalid_config).
ServiceConfig config_from_json(const nlohmann::json& j);
ServiceConfig load_config(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(std::string_view)>;
EnvLookup process_env();

// PORT, DATABASE_URL and TEMPLATE_DIR override the file.
void apply_env_overrides(ServiceConfig& config, const EnvLookup& env);

// Throws Error(invalid_config) listing every problem found.
void validate_config(const ServiceConfig& config);

} // namespace gradelens
