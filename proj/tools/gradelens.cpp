// gradelens: run the service and administer its store from the shell.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gradelens/answer_upload.hpp"
#include "gradelens/auth.hpp"
#include "gradelens/config.hpp"
#include "gradelens/engine.hpp"
#include "gradelens/error.hpp"
#include "gradelens/json_io.hpp"
#include "gradelens/metrics.hpp"
#include "gradelens/server.hpp"

namespace {

using namespace gradelens;

struct CommonOptions {
    std::string config_path;
    std::string database_url;
};

ServiceConfig resolve_config(const CommonOptions& common) {
    auto config = common.config_path.empty() ? default_config() : load_config(common.config_path);
    apply_env_overrides(config, process_env());
    if (!common.database_url.empty()) config.database_url = common.database_url;
    return config;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::bad_request, "cannot read " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::bad_request, "cannot write " + path);
    out << content;
}

int serve(const CommonOptions& common, int port_override, bool recover) {
    auto config = resolve_config(common);
    if (port_override >= 0) config.port = port_override;

    // Block termination signals in every thread; a dedicated thread waits
    // for them and stops the server.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Service service(config);
    if (recover) {
        const auto resumed = service.recover_and_resume();
        if (!resumed.empty()) spdlog::info("resuming {} interrupted jobs", resumed.size());
    }
    HttpServer server(service, config.http_threads);
    const int port = server.bind(config.host, config.port);
    std::cout << "listening on " << config.host << ':' << port << std::endl;

    std::jthread waiter([&server, signals] {
        int received = 0;
        sigwait(&signals, &received);
        spdlog::info("signal {}, shutting down", received);
        server.stop();
    });
    server.listen();
    // listen() also returns when binding is lost; make sure the waiter ends
    pthread_kill(waiter.native_handle(), SIGTERM);
    return 0;
}

int create_user_command(const CommonOptions& common, const std::string& name,
                        const std::string& role_text) {
    const auto config = resolve_config(common);
    const auto role = parse_user_role(role_text);
    if (!role) fail(ErrorCode::bad_request, "role must be educator, researcher or admin");
    auto store = open_store(config.database_url);
    const auto issued = create_user(*store, name, *role);
    std::cout << Json{{"user", issued.profile}, {"token", issued.token}}.dump(2) << '\n';
    return 0;
}

int list_providers(const CommonOptions& common) {
    const auto config = resolve_config(common);
    for (const auto& p : config.providers) {
        std::cout << p.provider_id << '\t' << to_string(p.kind) << '\t'
                  << (p.endpoint.empty() ? "-" : p.endpoint) << '\t' << "max_concurrent="
                  << p.max_concurrent << '\n';
    }
    return 0;
}

struct RunBatchOptions {
    std::string question_path;
    std::string answers_path;
    std::vector<std::string> providers{"mock"};
    std::string report_path;
};

int run_batch_command(const CommonOptions& common, const RunBatchOptions& options) {
    auto config = resolve_config(common);
    Service service(config);
    auto& store = service.store();

    auto question = Json::parse(read_file(options.question_path)).get<Question>();
    if (question.id.empty()) question.id = store.next_id("q");
    if (const auto violations = validate_question(question); !violations.empty()) {
        fail(ErrorCode::invalid_question, "question: " + Json(violations).dump());
    }
    if (!store.find_question(question.id)) store.insert_question(question);

    const auto content = read_file(options.answers_path);
    auto answers = parse_answer_upload(content, guess_upload_format("", options.answers_path),
                                       question.id, config.max_upload_rows);
    const auto validation = validate_answer_batch(question, answers);
    if (!validation.ok()) fail(ErrorCode::invalid_answers, "answers: " + Json(validation.violations).dump());
    store.insert_answers(answers);

    BatchRequest request;
    request.question_id = question.id;
    request.provider_ids = options.providers;
    for (const auto& a : answers) request.answer_ids.push_back(a.id);
    const auto job = service.engine().create_batch(request);
    const auto status = service.engine().run_batch(job.id);

    Json report{{"job", status.job}, {"records", status.records}};
    Json counts = Json::object();
    for (const auto& [s, n] : status.counts) counts[std::string(to_string(s))] = n;
    report["counts"] = counts;
    try {
        Json metrics = Json::array();
        for (const auto& r : build_reports(store, question.id)) metrics.push_back(report_to_json(r));
        report["metrics"] = metrics;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::no_evaluable_records) throw;
        report["metrics"] = nullptr;
    }
    write_file(options.report_path, report.dump(2) + "\n");
    return 0;
}

int export_command(const CommonOptions& common, const std::string& question_id,
                   const std::string& kind, bool include_preferred, const std::string& out) {
    const auto config = resolve_config(common);
    Service service(config);
    std::string content;
    if (kind == "pref") {
        content = service.annotations().export_preference_pairs(question_id);
    } else if (kind == "sft") {
        content = service.annotations().export_sft(question_id, include_preferred);
    } else {
        fail(ErrorCode::bad_request, "kind must be pref or sft");
    }
    write_file(out, content);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    // stdout carries command output (tokens, reports, exports)
    spdlog::set_default_logger(spdlog::stderr_color_mt("gradelens"));
    CLI::App app{"gradelens: explainable short-answer assessment service"};
    app.require_subcommand(1);

    CommonOptions common;
    auto add_common = [&common](CLI::App* sub) {
        sub->add_option("-c,--config", common.config_path, "JSON config file");
        sub->add_option("-d,--database-url", common.database_url,
                        "memory:, sqlite:<path> (overrides config and DATABASE_URL)");
    };

    auto* serve_cmd = app.add_subcommand("serve", "Run the REST API");
    add_common(serve_cmd);
    int port = -1;
    bool no_recover = false;
    serve_cmd->add_option("-p,--port", port, "Port (0 = any free port)");
    serve_cmd->add_flag("--no-recover", no_recover, "Do not resume interrupted jobs at startup");

    auto* user_cmd = app.add_subcommand("create-user", "Create a user and print its bearer token");
    add_common(user_cmd);
    std::string name;
    std::string role = "educator";
    user_cmd->add_option("-n,--name", name, "Display name")->required();
    user_cmd->add_option("-r,--role", role, "educator, researcher or admin");

    auto* providers_cmd = app.add_subcommand("list-providers", "Show configured model providers");
    add_common(providers_cmd);

    auto* batch_cmd = app.add_subcommand("run-batch", "Assess an answer file and write a report");
    add_common(batch_cmd);
    RunBatchOptions batch;
    batch_cmd->add_option("-q,--question", batch.question_path, "Question JSON file")->required();
    batch_cmd->add_option("-a,--answers", batch.answers_path, "Answers (.csv, .jsonl or .json)")
        ->required();
    batch_cmd->add_option("-P,--provider", batch.providers, "Provider id (repeatable)");
    batch_cmd->add_option("-o,--report", batch.report_path, "Report file (default stdout)");

    auto* export_cmd = app.add_subcommand("export", "Export annotation datasets as JSONL");
    add_common(export_cmd);
    std::string question_id;
    std::string kind;
    std::string out;
    bool include_preferred = false;
    export_cmd->add_option("-q,--question-id", question_id, "Question id")->required();
    export_cmd->add_option("-k,--kind", kind, "pref or sft")->required()->check(CLI::IsMember({"pref", "sft"}));
    export_cmd->add_flag("--include-preferred", include_preferred,
                         "sft: also export model rationales flagged preferred");
    export_cmd->add_option("-o,--out", out, "Output file (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (serve_cmd->parsed()) return serve(common, port, !no_recover);
        if (user_cmd->parsed()) return create_user_command(common, name, role);
        if (providers_cmd->parsed()) return list_providers(common);
        if (batch_cmd->parsed()) return run_batch_command(common, batch);
        if (export_cmd->parsed()) return export_command(common, question_id, kind, include_preferred, out);
    } catch (const Error& e) {
        std::cerr << "gradelens: " << to_string(e.code()) << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "gradelens: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
