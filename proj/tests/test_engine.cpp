#include <doctest.h>

#include "fixtures.hpp"
#include "gradelens/engine.hpp"
#include "gradelens/error.hpp"
#include "gradelens/mock_provider.hpp"
#include "gradelens/output_parser.hpp"
#include "gradelens/store.hpp"

using namespace gradelens;
using fixtures::FakeTransport;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::internal;
}

struct EngineFixture {
    std::shared_ptr<FakeTransport> transport = std::make_shared<FakeTransport>();
    std::unique_ptr<Store> store;
    ModelGateway gateway{transport};
    PromptCompiler compiler;
    AssessmentEngine engine;
    Question q = fixtures::sample_question();
    std::vector<StudentAnswer> answers;

    explicit EngineFixture(int answer_count = 10, std::unique_ptr<Store> s = make_memory_store())
        : store(std::move(s)), engine(*store, gateway, compiler, EngineOptions{4}) {
        gateway.register_provider(fixtures::mock_provider("mock"));
        gateway.register_provider(fixtures::mock_provider("mock-b"));
        auto remote = fixtures::remote_provider("remote", 2);
        remote.max_retries = 0;
        gateway.register_provider(remote);
        answers = fixtures::sample_answers(q, answer_count);
        store->insert_question(q);
        store->insert_answers(answers);
    }

    BatchJob create(std::vector<std::string> providers, std::vector<std::string> answer_ids = {}) {
        return engine.create_batch({q.id, std::move(answer_ids), std::move(providers)});
    }
};

} // namespace

TEST_CASE("batch creation makes one pending record per answer and provider") {
    EngineFixture f(10);
    const auto job = f.create({"mock", "mock-b"});
    CHECK(job.record_count() == 20);
    CHECK(job.state == JobState::created);
    const auto status = f.engine.get_batch_status(job.id);
    CHECK(status.records.size() == 20);
    CHECK(status.counts == std::map<RecordStatus, std::size_t>{{RecordStatus::pending, 20}});
}

TEST_CASE("batch creation validates before writing") {
    EngineFixture f(3);
    CHECK(code_of([&] { f.create({"mock", "ghost"}); }) == ErrorCode::unknown_provider);
    CHECK(code_of([&] { f.create({}); }) == ErrorCode::empty_batch);
    CHECK(code_of([&] { f.create({"mock", "mock"}); }) == ErrorCode::bad_request);
    CHECK(code_of([&] { f.create({"mock"}, {"a000", "nope"}); }) == ErrorCode::answer_not_found);
    CHECK(code_of([&] { f.engine.create_batch({"q-missing", {}, {"mock"}}); }) ==
          ErrorCode::question_not_found);
    CHECK(f.store->records_for_question(f.q.id).empty());
    CHECK(f.store->jobs_in_state(JobState::created).empty());

    auto empty = fixtures::small_question("q-empty");
    f.store->insert_question(empty);
    CHECK(code_of([&] { f.engine.create_batch({empty.id, {}, {"mock"}}); }) == ErrorCode::empty_batch);
}

TEST_CASE("mock batch completes with oracle marks and reruns are no-ops") {
    EngineFixture f(50);
    const auto job = f.create({"mock"});
    const auto status = f.engine.run_batch(job.id);
    CHECK(status.terminal());
    CHECK(status.counts == std::map<RecordStatus, std::size_t>{{RecordStatus::completed, 50}});
    for (const auto& r : status.records) {
        const auto& answer = *std::find_if(f.answers.begin(), f.answers.end(),
                                           [&](const auto& a) { return a.id == r.answer_id; });
        CHECK(r.mark == fixtures::oracle_mock_mark(f.q, answer.text));
        CHECK(r.raw_output == mock_assess(f.q, answer.text));
        CHECK(r.finished_at.has_value());
        CHECK(record_is_consistent(r));
    }

    const auto again = f.engine.run_batch(job.id);
    CHECK(again.records == status.records);
    CHECK(again.job == status.job);
}

TEST_CASE("a failing provider fails every record but finishes the job") {
    EngineFixture f(6);
    auto always_down = std::make_shared<FakeTransport>(std::vector<FakeTransport::Reply>{FakeTransport::refused()});
    ModelGateway gateway(always_down);
    auto remote = fixtures::remote_provider("remote");
    remote.max_retries = 1;
    gateway.register_provider(remote);
    AssessmentEngine engine(*f.store, gateway, f.compiler);
    const auto job = engine.create_batch({f.q.id, {}, {"remote"}});
    const auto status = engine.run_batch(job.id);
    CHECK(status.terminal());
    CHECK(status.counts == std::map<RecordStatus, std::size_t>{{RecordStatus::provider_failed, 6}});
    for (const auto& r : status.records) {
        CHECK(r.failure_reason->starts_with("provider_failed: "));
        CHECK_FALSE(r.mark.has_value());
    }
}

TEST_CASE("mixed outcomes stay isolated and the counts add up") {
    EngineFixture f(12);
    // answer index modulo 3 decides the reply: valid JSON, prose without a
    // mark, or a server error
    f.transport->responder = [](const HttpRequest& request) -> FakeTransport::Reply {
        const auto body = nlohmann::json::parse(request.body);
        const std::string prompt = body["messages"].back()["content"];
        const auto at = prompt.find("Answer ");
        const int index = std::stoi(prompt.substr(at + 7));
        switch (index % 3) {
        case 0: return FakeTransport::ok(R"({"mark": 1, "rationale": "fine"})");
        case 1: return FakeTransport::ok("I cannot decide.");
        default: return FakeTransport::status(500);
        }
    };
    const auto job = f.create({"remote", "mock"});
    const auto status = f.engine.run_batch(job.id);
    CHECK(status.terminal());
    std::size_t total = 0;
    for (const auto& [s, n] : status.counts) total += n;
    CHECK(total == 24);
    CHECK(status.counts.at(RecordStatus::completed) == 12 + 4);
    CHECK(status.counts.at(RecordStatus::parse_failed) == 4);
    CHECK(status.counts.at(RecordStatus::provider_failed) == 4);
    for (const auto& r : status.records) {
        CHECK(record_is_consistent(r));
        if (r.status == RecordStatus::parse_failed) {
            CHECK(r.failure_reason == "no_mark_found");
            CHECK(r.raw_output == "I cannot decide.");
        }
    }
    CHECK(f.transport->peak() <= 2);
}

TEST_CASE("a job that is running cannot be claimed twice") {
    EngineFixture f(8);
    f.transport->responder = [](const HttpRequest&) -> FakeTransport::Reply {
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        return FakeTransport::ok(R"({"mark": 0, "rationale": "slow"})");
    };
    const auto job = f.create({"remote"});
    const auto started = f.engine.start_batch(job.id);
    CHECK(started.job.state == JobState::running);
    CHECK(code_of([&] { f.engine.run_batch(job.id); }) == ErrorCode::job_already_running);

    // progress is visible while the job runs
    const auto midway = f.engine.get_batch_status(job.id);
    std::size_t total = 0;
    for (const auto& [s, n] : midway.counts) total += n;
    CHECK(total == 8);

    f.engine.wait_idle();
    const auto done = f.engine.get_batch_status(job.id);
    CHECK(done.terminal());
    CHECK(done.counts.at(RecordStatus::completed) == 8);
    CHECK(code_of([&] { f.engine.get_batch_status("job-404"); }) == ErrorCode::job_not_found);
}

TEST_CASE("recovery resets interrupted records and reruns only those") {
    EngineFixture f(5);
    const auto job = f.create({"mock"});
    // simulate a crash: job running, two records stuck in running, one done
    REQUIRE(f.store->transition_job(job.id, JobState::created, JobState::running));
    auto records = f.store->records_for_job(job.id);
    for (int i = 0; i < 3; ++i) {
        auto r = records[i];
        r.status = RecordStatus::running;
        REQUIRE(f.store->update_record(r, RecordStatus::pending));
    }
    auto finished = records[0];
    finished.status = RecordStatus::completed;
    finished.mark = 3;
    finished.rationale = "kept from before the crash";
    finished.finished_at = now();
    REQUIRE(f.store->update_record(finished, RecordStatus::running));

    CHECK(f.engine.recover() == std::vector<std::string>{job.id});
    CHECK(f.store->find_job(job.id)->state == JobState::created);
    const auto status = f.engine.run_batch(job.id);
    CHECK(status.counts.at(RecordStatus::completed) == 5);
    CHECK(status.records[0].rationale == "kept from before the crash");
}

TEST_CASE("two engines over one store never assess a record twice") {
    EngineFixture f(30);
    std::atomic<int> calls{0};
    f.transport->responder = [&](const HttpRequest&) -> FakeTransport::Reply {
        ++calls;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        return FakeTransport::ok(R"({"mark": 2, "rationale": "r"})");
    };
    const auto job = f.create({"remote"});
    AssessmentEngine other(*f.store, f.gateway, f.compiler);
    // a second engine over the same store cannot claim the job while it runs
    f.engine.start_batch(job.id);
    CHECK(code_of([&] { other.run_batch(job.id); }) == ErrorCode::job_already_running);
    f.engine.wait_idle();
    CHECK(calls == 30);
}

TEST_CASE("answer subsets and the prompt suffix") {
    EngineFixture f(4);
    std::vector<std::string> prompts;
    std::mutex mutex;
    f.transport->responder = [&](const HttpRequest& request) -> FakeTransport::Reply {
        std::lock_guard lock(mutex);
        prompts.push_back(nlohmann::json::parse(request.body)["messages"].back()["content"]);
        return FakeTransport::ok(R"({"mark": 1, "rationale": "r"})");
    };
    BatchRequest request{f.q.id, {"a002"}, {"remote"}, RecordOrigin::chat, "\n\nEXTRA"};
    const auto status = f.engine.run_batch(f.engine.create_batch(request).id);
    REQUIRE(status.records.size() == 1);
    CHECK(status.records[0].answer_id == "a002");
    CHECK(status.records[0].origin == RecordOrigin::chat);
    REQUIRE(prompts.size() == 1);
    CHECK(prompts[0] == f.compiler.compile_assessment_prompt(f.q, f.answers[2]) + "\n\nEXTRA");
}
