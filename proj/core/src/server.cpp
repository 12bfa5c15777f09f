#include "gradelens/server.hpp"

#include <functional>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "gradelens/answer_upload.hpp"
#include "gradelens/auth.hpp"
#include "gradelens/json_io.hpp"
#include "gradelens/metrics.hpp"
#include "gradelens/text.hpp"

namespace gradelens {

int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::bad_request:
    case ErrorCode::invalid_question:
    case ErrorCode::invalid_answers:
    case ErrorCode::invalid_config:
    case ErrorCode::invalid_tagging_request:
    case ErrorCode::unknown_provider:
    case ErrorCode::empty_batch:
    case ErrorCode::out_of_range:
    case ErrorCode::empty_rationale:
    case ErrorCode::empty_pair_set:
    case ErrorCode::single_class_range:
        return 400;
    case ErrorCode::unauthorized:
        return 401;
    case ErrorCode::question_not_found:
    case ErrorCode::answer_not_found:
    case ErrorCode::record_not_found:
    case ErrorCode::job_not_found:
    case ErrorCode::session_not_found:
    case ErrorCode::highlight_not_found:
    case ErrorCode::no_evaluable_records:
        return 404;
    case ErrorCode::job_already_running:
    case ErrorCode::record_not_completed:
    case ErrorCode::session_busy:
    case ErrorCode::no_imported_context:
    case ErrorCode::duplicate_id:
        return 409;
    case ErrorCode::provider_failed:
    case ErrorCode::timeout:
    case ErrorCode::tagging_parse_failed:
        return 502;
    case ErrorCode::template_error:
    case ErrorCode::store_failure:
    case ErrorCode::internal:
        return 500;
    }
    return 500;
}

namespace {

// An Error that carries structured details (validation violations).
class DetailedError : public Error {
public:
    DetailedError(ErrorCode code, std::string message, Json details)
        : Error(code, std::move(message)), details_(std::move(details)) {}
    const Json& details() const { return details_; }

private:
    Json details_;
};

std::string dump(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::replace); }

ApiReply json_reply(int status, const Json& body) { return {status, dump(body), "application/json", ""}; }

ApiReply error_reply(int status, std::string_view code, std::string_view message,
                     const Json* details = nullptr) {
    Json error{{"code", code}, {"message", message}};
    if (details != nullptr) error["details"] = *details;
    return json_reply(status, Json{{"error", std::move(error)}});
}

ApiReply error_reply(const Error& e) {
    const auto* detailed = dynamic_cast<const DetailedError*>(&e);
    return error_reply(http_status(e.code()), to_string(e.code()), e.what(),
                       detailed ? &detailed->details() : nullptr);
}

Json parse_body(const ApiRequest& request) {
    if (is_blank(request.body)) return Json::object();
    auto body = Json::parse(request.body, nullptr, false);
    if (body.is_discarded()) fail(ErrorCode::bad_request, "request body is not valid JSON");
    if (!body.is_object()) fail(ErrorCode::bad_request, "request body must be a JSON object");
    return body;
}

std::optional<std::string> query(const ApiRequest& request, const std::string& name) {
    const auto it = request.query.find(name);
    if (it == request.query.end()) return std::nullopt;
    return it->second;
}

bool query_flag(const ApiRequest& request, const std::string& name) {
    const auto value = query(request, name);
    return value && (*value == "1" || *value == "true" || *value == "yes");
}

TaggingMode read_mode(std::string_view text) {
    const auto mode = parse_tagging_mode(text);
    if (!mode) {
        fail(ErrorCode::bad_request,
             "mode must be key_elements or rationale_aspects, not '" + std::string(text) + "'");
    }
    return *mode;
}

std::vector<std::string> read_string_array(const Json& body, std::string_view name) {
    std::vector<std::string> out;
    const auto it = body.find(name);
    if (it == body.end() || it->is_null()) return out;
    if (!it->is_array()) fail(ErrorCode::bad_request, "field '" + std::string(name) + "' must be an array");
    for (const auto& item : *it) {
        if (!item.is_string()) {
            fail(ErrorCode::bad_request, "field '" + std::string(name) + "' must hold strings");
        }
        out.push_back(item.get<std::string>());
    }
    return out;
}

Json status_json(const BatchStatus& status) {
    Json counts = Json::object();
    for (auto s : {RecordStatus::pending, RecordStatus::running, RecordStatus::completed,
                   RecordStatus::parse_failed, RecordStatus::provider_failed}) {
        const auto it = status.counts.find(s);
        counts[std::string(to_string(s))] = it == status.counts.end() ? 0 : it->second;
    }
    return Json{{"job", status.job},
                {"record_count", status.records.size()},
                {"terminal", status.terminal()},
                {"counts", std::move(counts)},
                {"records", status.records}};
}

Json preference_json(PreferenceFlag flag) { return to_string(flag); }

std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= path.size()) {
        auto next = path.find('/', pos);
        if (next == std::string_view::npos) next = path.size();
        if (next > pos) parts.emplace_back(path.substr(pos, next - pos));
        pos = next + 1;
    }
    return parts;
}

} // namespace

using Args = std::vector<std::string>;
using Handler = std::function<ApiReply(const Args&, const ApiRequest&, const UserProfile&)>;

struct Route {
    std::string method;
    std::vector<std::string> pattern;  // "{}" matches one segment
    Handler handler;
};

struct Service::Routes {
    std::vector<Route> routes;

    void add(std::string method, std::string_view pattern, Handler handler) {
        routes.push_back({std::move(method), split_path(pattern), std::move(handler)});
    }

    static std::optional<Args> match(const Route& route, const std::vector<std::string>& parts) {
        if (route.pattern.size() != parts.size()) return std::nullopt;
        Args args;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (route.pattern[i] == "{}") {
                args.push_back(parts[i]);
            } else if (route.pattern[i] != parts[i]) {
                return std::nullopt;
            }
        }
        return args;
    }
};

Service::Service(ServiceConfig config, std::shared_ptr<Transport> transport,
                 std::unique_ptr<Store> store)
    : config_(std::move(config)),
      store_(store ? std::move(store) : open_store(config_.database_url)),
      gateway_(transport ? std::move(transport) : std::make_shared<HttplibTransport>()),
      compiler_(config_.template_dir.empty() ? TemplateSet::defaults()
                                             : TemplateSet::load_directory(config_.template_dir)),
      engine_(*store_, gateway_, compiler_, EngineOptions{config_.workers}),
      highlighter_(*store_, gateway_, compiler_, config_.tagging_provider),
      annotations_(*store_, compiler_),
      chat_(*store_, gateway_, compiler_, engine_, ChatOptions{config_.chat_digest_budget}),
      routes_(std::make_unique<Routes>()) {
    validate_config(config_);
    for (const auto& provider : config_.providers) gateway_.register_provider(provider);

    auto& r = *routes_;
    Store& store_ref = *store_;

    auto require_question = [&store_ref](const std::string& id) {
        auto q = store_ref.find_question(id);
        if (!q) fail(ErrorCode::question_not_found, "no question '" + id + "'");
        return std::move(*q);
    };
    auto require_answer = [&store_ref](const std::string& id) {
        auto a = store_ref.find_answer(id);
        if (!a) fail(ErrorCode::answer_not_found, "no answer '" + id + "'");
        return std::move(*a);
    };
    auto require_record = [&store_ref](const std::string& id) {
        auto rec = store_ref.find_record(id);
        if (!rec) fail(ErrorCode::record_not_found, "no record '" + id + "'");
        return std::move(*rec);
    };
    // Sessions are private to the user who opened them.
    auto owned_session = [this](const std::string& id, const UserProfile& user) {
        auto session = chat_.get_session(id);
        if (session.user_id != user.id) fail(ErrorCode::session_not_found, "no session '" + id + "'");
        return session;
    };

    r.add("GET", "/api/me", [](const Args&, const ApiRequest&, const UserProfile& user) {
        return json_reply(200, Json(user));
    });

    r.add("GET", "/api/providers", [this](const Args&, const ApiRequest&, const UserProfile&) {
        Json list = Json::array();
        for (const auto& p : gateway_.providers()) list.push_back(provider_to_json(p));
        return json_reply(200, Json{{"providers", std::move(list)},
                                    {"tagging_provider", config_.tagging_provider}});
    });

    r.add("POST", "/api/questions", [&store_ref](const Args&, const ApiRequest& req, const UserProfile&) {
        auto question = parse_body(req).get<Question>();
        if (question.id.empty()) question.id = store_ref.next_id("q");
        const auto violations = validate_question(question);
        if (!violations.empty()) {
            throw DetailedError(ErrorCode::invalid_question, "the question is invalid",
                                Json{{"violations", violations}});
        }
        store_ref.insert_question(question);
        return json_reply(201, Json(question));
    });

    r.add("GET", "/api/questions", [&store_ref](const Args&, const ApiRequest&, const UserProfile&) {
        return json_reply(200, Json{{"questions", store_ref.list_questions()}});
    });

    r.add("GET", "/api/questions/{}", [require_question](const Args& a, const ApiRequest&,
                                                          const UserProfile&) {
        return json_reply(200, Json(require_question(a[0])));
    });

    r.add("POST", "/api/questions/{}/answers",
          [this, &store_ref, require_question](const Args& a, const ApiRequest& req,
                                               const UserProfile&) {
              const auto question = require_question(a[0]);
              std::string_view content = req.body;
              std::string_view content_type = req.content_type;
              std::string_view filename;
              if (!req.files.empty()) {
                  content = req.files.front().content;
                  content_type = req.files.front().content_type;
                  filename = req.files.front().filename;
              }
              UploadFormat format = guess_upload_format(content_type, filename);
              const auto first = trim(content);
              if (req.files.empty() && !first.empty() && first.front() == '[') {
                  format = UploadFormat::json_array;
              }
              auto answers = parse_answer_upload(content, format, question.id, config_.max_upload_rows);
              if (answers.empty()) fail(ErrorCode::invalid_answers, "the upload holds no answers");

              auto validation = validate_answer_batch(question, answers);
              for (std::size_t i = 0; i < answers.size(); ++i) {
                  if (is_blank(answers[i].id)) {
                      fail(ErrorCode::bad_request, "answer " + std::to_string(i) + " has an empty id");
                  }
                  if (store_ref.find_answer(answers[i].id)) {
                      validation.violations.push_back(
                          {ViolationCode::duplicate_id, i,
                           "answer id '" + answers[i].id + "' already exists"});
                  }
              }
              if (!validation.violations.empty()) {
                  throw DetailedError(ErrorCode::invalid_answers, "the answer batch was rejected",
                                      Json{{"violations", validation.violations}});
              }
              for (auto& answer : answers) answer.question_id = question.id;
              store_ref.insert_answers(answers);
              return json_reply(201, Json{{"question_id", question.id},
                                          {"count", answers.size()},
                                          {"answers", answers}});
          });

    r.add("GET", "/api/questions/{}/answers",
          [&store_ref, require_question](const Args& a, const ApiRequest&, const UserProfile&) {
              const auto question = require_question(a[0]);
              return json_reply(200, Json{{"question_id", question.id},
                                          {"answers", store_ref.answers_for_question(question.id)}});
          });

    r.add("POST", "/api/questions/{}/batches",
          [this](const Args& a, const ApiRequest& req, const UserProfile&) {
              const auto body = parse_body(req);
              BatchRequest request;
              request.question_id = a[0];
              request.provider_ids = read_string_array(body, "provider_ids");
              request.answer_ids = read_string_array(body, "answer_ids");
              const auto job = engine_.create_batch(request);
              return json_reply(201, Json{{"job", job}, {"record_count", job.record_count()}});
          });

    r.add("POST", "/api/batches/{}/run", [this](const Args& a, const ApiRequest& req,
                                                  const UserProfile&) {
        if (query_flag(req, "wait")) return json_reply(200, status_json(engine_.run_batch(a[0])));
        return json_reply(202, status_json(engine_.start_batch(a[0])));
    });

    r.add("GET", "/api/batches/{}", [this](const Args& a, const ApiRequest&, const UserProfile&) {
        return json_reply(200, status_json(engine_.get_batch_status(a[0])));
    });

    r.add("GET", "/api/answers/{}", [this, require_answer](const Args& a, const ApiRequest&,
                                                          const UserProfile&) {
        const auto answer = require_answer(a[0]);
        Json body(answer);
        const auto gold = annotations_.effective_gold(answer.id);
        body["effective_gold"] = gold ? Json(*gold) : Json(nullptr);
        return json_reply(200, body);
    });

    r.add("GET", "/api/answers/{}/records",
          [&store_ref, require_answer](const Args& a, const ApiRequest&, const UserProfile&) {
              const auto answer = require_answer(a[0]);
              return json_reply(200, Json{{"answer_id", answer.id},
                                          {"records", store_ref.records_for_answer(answer.id)}});
          });

    r.add("GET", "/api/records/{}", [require_record](const Args& a, const ApiRequest&,
                                                     const UserProfile&) {
        return json_reply(200, Json(require_record(a[0])));
    });

    r.add("POST", "/api/records/{}/highlights",
          [this](const Args& a, const ApiRequest& req, const UserProfile&) {
              const auto body = parse_body(req);
              const auto mode = read_mode(read_string(body, "mode"));
              return json_reply(200, to_json_document(highlighter_.compute(a[0], mode)));
          });

    r.add("GET", "/api/records/{}/highlights",
          [this](const Args& a, const ApiRequest& req, const UserProfile&) {
              const auto mode_text = query(req, "mode");
              if (!mode_text) fail(ErrorCode::bad_request, "query parameter 'mode' is required");
              return json_reply(200,
                                to_json_document(highlighter_.cached(a[0], read_mode(*mode_text))));
          });

    r.add("POST", "/api/answers/{}/gold-correction",
          [this](const Args& a, const ApiRequest& req, const UserProfile& user) {
              const auto mark = read_int(parse_body(req), "mark");
              const auto event = annotations_.correct_gold_label(a[0], mark, user.id);
              const auto gold = annotations_.effective_gold(a[0]);
              return json_reply(201, Json{{"event", event},
                                          {"effective_gold", gold ? Json(*gold) : Json(nullptr)}});
          });

    r.add("POST", "/api/records/{}/preference",
          [this, &store_ref](const Args& a, const ApiRequest& req, const UserProfile& user) {
              const auto text = read_string(parse_body(req), "flag");
              const auto flag = parse_preference_flag(text);
              if (!flag) {
                  fail(ErrorCode::bad_request,
                       "flag must be preferred or not_preferred, not '" + text + "'");
              }
              const auto event = annotations_.set_preference(a[0], *flag, user.id);
              const auto flags = effective_preferences(a[0], store_ref.events_for_target(a[0]));
              return json_reply(201, Json{{"event", event},
                                          {"effective_flag", preference_json(flags.at(user.id))}});
          });

    r.add("GET", "/api/records/{}/preference",
          [&store_ref, require_record](const Args& a, const ApiRequest&, const UserProfile& user) {
              const auto record = require_record(a[0]);
              const auto flags = effective_preferences(record.id, store_ref.events_for_target(record.id));
              const auto it = flags.find(user.id);
              return json_reply(200, Json{{"record_id", record.id},
                                          {"effective_flag", it == flags.end()
                                                                 ? Json(nullptr)
                                                                 : preference_json(it->second)}});
          });

    r.add("POST", "/api/answers/{}/rationale",
          [this, require_record](const Args& a, const ApiRequest& req, const UserProfile& user) {
              const auto body = parse_body(req);
              const auto mark = read_int(body, "mark");
              const auto text = read_string(body, "rationale");
              const auto event = annotations_.submit_rationale(a[0], mark, text, user.id);
              const auto& authored = std::get<AuthoredRationale>(event.payload);
              return json_reply(201, Json{{"event", event},
                                          {"record", require_record(authored.record_id)}});
          });

    r.add("GET", "/api/questions/{}/metrics",
          [&store_ref](const Args& a, const ApiRequest& req, const UserProfile&) {
              const auto reports = build_reports(store_ref, a[0]);
              if (query(req, "format") == "csv") {
                  return ApiReply{200, reports_to_csv(reports), "text/csv", a[0] + "-metrics.csv"};
              }
              Json list = Json::array();
              for (const auto& report : reports) list.push_back(report_to_json(report));
              return json_reply(200, Json{{"question_id", a[0]}, {"reports", std::move(list)}});
          });

    r.add("GET", "/api/questions/{}/export",
          [this](const Args& a, const ApiRequest& req, const UserProfile&) {
              const auto kind = query(req, "kind").value_or("");
              std::string content;
              if (kind == "pref") {
                  content = annotations_.export_preference_pairs(a[0]);
              } else if (kind == "sft") {
                  content = annotations_.export_sft(a[0], query_flag(req, "include_preferred"));
              } else {
                  fail(ErrorCode::bad_request, "kind must be pref or sft");
              }
              return ApiReply{200, std::move(content), "application/x-ndjson",
                              a[0] + "-" + kind + ".jsonl"};
          });

    r.add("POST", "/api/chat/sessions",
          [this](const Args&, const ApiRequest& req, const UserProfile& user) {
              const auto body = parse_body(req);
              const auto provider = read_string(body, "provider_id");
              std::optional<ImportedContext> context;
              if (body.contains("context") && !body["context"].is_null()) {
                  context = body["context"].get<ImportedContext>();
              }
              return json_reply(201, Json(chat_.create_session(user.id, provider, context)));
          });

    r.add("GET", "/api/chat/sessions/{}",
          [owned_session](const Args& a, const ApiRequest&, const UserProfile& user) {
              return json_reply(200, Json(owned_session(a[0], user)));
          });

    r.add("POST", "/api/chat/sessions/{}/messages",
          [this, owned_session](const Args& a, const ApiRequest& req, const UserProfile& user) {
              owned_session(a[0], user);
              const auto text = read_string(parse_body(req), "text");
              const auto reply = chat_.post_message(a[0], text);
              return json_reply(200, Json{{"message", reply}, {"session", chat_.get_session(a[0])}});
          });

    r.add("POST", "/api/chat/sessions/{}/retry",
          [this, owned_session](const Args& a, const ApiRequest&, const UserProfile& user) {
              owned_session(a[0], user);
              const auto reply = chat_.retry_turn(a[0]);
              return json_reply(200, Json{{"message", reply}, {"session", chat_.get_session(a[0])}});
          });

    r.add("POST", "/api/chat/sessions/{}/regenerate",
          [this, owned_session](const Args& a, const ApiRequest& req, const UserProfile& user) {
              owned_session(a[0], user);
              const auto answer_id = read_string(parse_body(req), "answer_id");
              return json_reply(201, Json{{"record", chat_.regenerate_assessment(a[0], answer_id)}});
          });
}

Service::~Service() { engine_.wait_idle(); }

ApiReply Service::handle(const ApiRequest& request) {
    try {
        const auto parts = split_path(request.path);
        if (parts == std::vector<std::string>{"healthz"}) {
            if (request.method != "GET") return error_reply(405, "method_not_allowed", "use GET");
            return json_reply(200, Json{{"status", "ok"}});
        }
        bool path_known = false;
        const Route* route = nullptr;
        Args args;
        for (const auto& candidate : routes_->routes) {
            auto matched = Routes::match(candidate, parts);
            if (!matched) continue;
            path_known = true;
            if (candidate.method == request.method) {
                route = &candidate;
                args = std::move(*matched);
                break;
            }
        }
        if (!path_known) return error_reply(404, "not_found", "no route for " + request.path);
        const auto user = authenticate(*store_, request.authorization);
        if (!user) fail(ErrorCode::unauthorized, "a valid bearer token is required");
        if (route == nullptr) {
            return error_reply(405, "method_not_allowed",
                               request.method + " is not allowed on " + request.path);
        }
        return route->handler(args, request, *user);
    } catch (const Error& e) {
        if (http_status(e.code()) >= 500) {
            spdlog::error("{} {}: {}: {}", request.method, request.path, to_string(e.code()), e.what());
        }
        return error_reply(e);
    } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", request.method, request.path, e.what());
        return error_reply(500, to_string(ErrorCode::internal), e.what());
    }
}

std::vector<std::string> Service::recover_and_resume() {
    // jobs that were created but never run wait for an explicit run
    auto jobs = engine_.recover();
    for (const auto& id : jobs) engine_.start_batch(id);
    return jobs;
}

struct HttpServer::Impl {
    Service& service;
    httplib::Server server;

    Impl(Service& s, std::size_t threads) : service(s) {
        server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
        server.set_payload_max_length(64 * 1024 * 1024);
        const auto handler = [this](const httplib::Request& req, httplib::Response& res) {
            ApiRequest request;
            request.method = req.method;
            request.path = req.path;
            for (const auto& [key, value] : req.params) request.query.emplace(key, value);
            request.body = req.body;
            request.content_type = req.get_header_value("Content-Type");
            request.authorization = req.get_header_value("Authorization");
            for (const auto& [field, file] : req.files) {
                request.files.push_back({field, file.filename, file.content_type, file.content});
            }
            const auto reply = service.handle(request);
            res.status = reply.status;
            if (!reply.filename.empty()) {
                res.set_header("Content-Disposition",
                               "attachment; filename=\"" + reply.filename + "\"");
            }
            res.set_content(reply.body, reply.content_type);
        };
        server.Get(".*", handler);
        server.Post(".*", handler);
        server.Put(".*", handler);
        server.Patch(".*", handler);
        server.Delete(".*", handler);
    }
};

HttpServer::HttpServer(Service& service, std::size_t threads)
    : impl_(std::make_unique<Impl>(service, std::max<std::size_t>(threads, 1))) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound <= 0) fail(ErrorCode::invalid_config, "cannot bind " + host + " to a free port");
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        fail(ErrorCode::invalid_config, "cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

} // namespace gradelens
