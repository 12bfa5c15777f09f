#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gradelens/annotations.hpp"
#include "gradelens/chat.hpp"
#include "gradelens/config.hpp"
#include "gradelens/engine.hpp"
#include "gradelens/error.hpp"
#include "gradelens/gateway.hpp"
#include "gradelens/highlight.hpp"
#include "gradelens/prompt.hpp"
#include "gradelens/store.hpp"

namespace gradelens {

// validation 400, unauthorized 401, lookup 404, conflict 409, upstream model
// failure 502, everything else 500.
int http_status(ErrorCode code);

struct UploadedFile {
    std::string field;
    std::string filename;
    std::string content_type;
    std::string content;
};

// Transport-neutral request, filled by the HTTP adapter or by tests.
struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
    std::string content_type;
    std::string authorization;
    std::vector<UploadedFile> files;
};

struct ApiReply {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
    // set for downloads (Content-Disposition: attachment)
    std::string filename;
};

// Everything a request can touch. Handlers keep no state between requests:
// whatever outlives a request lives in the store.
class Service {
public:
    // A null transport means real HTTP; a null store is opened from
    // config.database_url. Throws Error(invalid_config | template_error) and
    // store errors.
    explicit Service(ServiceConfig config, std::shared_ptr<Transport> transport = nullptr,
                     std::unique_ptr<Store> store = nullptr);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Never throws; failures become {"error": {"code", "message"}} replies.
    ApiReply handle(const ApiRequest& request);

    // Restart policy for a single writer: reset interrupted work and run it
    // again in the background. Returns the resumed job ids.
    std::vector<std::string> recover_and_resume();

    const ServiceConfig& config() const { return config_; }
    Store& store() { return *store_; }
    ModelGateway& gateway() { return gateway_; }
    const PromptCompiler& compiler() const { return compiler_; }
    AssessmentEngine& engine() { return engine_; }
    Highlighter& highlighter() { return highlighter_; }
    AnnotationService& annotations() { return annotations_; }
    ChatService& chat() { return chat_; }

private:
    struct Routes;

    ServiceConfig config_;
    std::unique_ptr<Store> store_;
    ModelGateway gateway_;
    PromptCompiler compiler_;
    AssessmentEngine engine_;
    Highlighter highlighter_;
    AnnotationService annotations_;
    ChatService chat_;
    std::unique_ptr<Routes> routes_;
};

// Serves a Service over HTTP with cpp-httplib.
class HttpServer {
public:
    HttpServer(Service& service, std::size_t threads);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Port 0 picks a free port. Returns the bound port. Throws
    // Error(invalid_config) when binding fails.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace gradelens
