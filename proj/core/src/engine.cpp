#include "gradelens/engine.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "gradelens/error.hpp"
#include "gradelens/output_parser.hpp"

namespace gradelens {

AssessmentEngine::AssessmentEngine(Store& store, ModelGateway& gateway,
                                   const PromptCompiler& compiler, EngineOptions options)
    : store_(store), gateway_(gateway), compiler_(compiler), options_(options) {
    if (options_.workers == 0) options_.workers = 1;
}

AssessmentEngine::~AssessmentEngine() { wait_idle(); }

BatchJob AssessmentEngine::create_batch(const BatchRequest& request) {
    const auto question = store_.find_question(request.question_id);
    if (!question) fail(ErrorCode::question_not_found, "no question '" + request.question_id + "'");

    std::vector<std::string> answer_ids = request.answer_ids;
    if (answer_ids.empty()) {
        for (const auto& a : store_.answers_for_question(question->id)) answer_ids.push_back(a.id);
    } else {
        for (const auto& id : answer_ids) {
            const auto answer = store_.find_answer(id);
            if (!answer || answer->question_id != question->id) {
                fail(ErrorCode::answer_not_found,
                     "no answer '" + id + "' for question '" + question->id + "'");
            }
        }
    }
    if (answer_ids.empty()) fail(ErrorCode::empty_batch, "the batch has no answers");
    if (request.provider_ids.empty()) fail(ErrorCode::empty_batch, "the batch has no providers");
    std::unordered_set<std::string> seen_providers;
    for (const auto& p : request.provider_ids) {
        if (!gateway_.has_provider(p)) {
            fail(ErrorCode::unknown_provider, "unknown provider '" + p + "'");
        }
        if (!seen_providers.insert(p).second) {
            fail(ErrorCode::bad_request, "provider '" + p + "' listed twice");
        }
    }

    BatchJob job;
    job.id = store_.next_id("job");
    job.question_id = question->id;
    job.answer_ids = std::move(answer_ids);
    job.provider_ids = request.provider_ids;
    job.origin = request.origin;
    job.prompt_suffix = request.prompt_suffix;
    job.created_at = now();

    std::vector<AssessmentRecord> records;
    records.reserve(job.record_count());
    for (const auto& answer_id : job.answer_ids) {
        for (const auto& provider_id : job.provider_ids) {
            AssessmentRecord r;
            r.id = store_.next_id("rec");
            r.job_id = job.id;
            r.question_id = job.question_id;
            r.answer_id = answer_id;
            r.provider_id = provider_id;
            r.origin = job.origin;
            r.created_at = job.created_at;
            records.push_back(std::move(r));
        }
    }
    store_.insert_job(job, records);
    return job;
}

AssessmentEngine::Claim AssessmentEngine::claim(std::string_view job_id) {
    const auto job = store_.find_job(job_id);
    if (!job) fail(ErrorCode::job_not_found, "no job '" + std::string(job_id) + "'");
    if (job->state == JobState::terminal) return Claim::already_terminal;
    if (!store_.transition_job(job_id, JobState::created, JobState::running)) {
        const auto current = store_.find_job(job_id);
        if (current && current->state == JobState::terminal) return Claim::already_terminal;
        fail(ErrorCode::job_already_running, "job '" + std::string(job_id) + "' is running");
    }
    return Claim::claimed;
}

BatchStatus AssessmentEngine::run_batch(std::string_view job_id) {
    if (claim(job_id) == Claim::claimed) execute(*store_.find_job(job_id));
    return get_batch_status(job_id);
}

BatchStatus AssessmentEngine::start_batch(std::string_view job_id) {
    if (claim(job_id) == Claim::claimed) {
        auto job = *store_.find_job(job_id);
        std::lock_guard lock(background_mutex_);
        background_.emplace_back([this, job = std::move(job)] {
            try {
                execute(job);
            } catch (const std::exception& e) {
                spdlog::error("background run of {} failed: {}", job.id, e.what());
            }
        });
    }
    return get_batch_status(job_id);
}

void AssessmentEngine::wait_idle() {
    std::vector<std::jthread> running;
    {
        std::lock_guard lock(background_mutex_);
        running.swap(background_);
    }
    running.clear();  // joins
}

void AssessmentEngine::execute(const BatchJob& job) {
    const auto question = store_.find_question(job.question_id);
    if (!question) fail(ErrorCode::question_not_found, "no question '" + job.question_id + "'");

    std::unordered_map<std::string, StudentAnswer> answers;
    for (const auto& id : job.answer_ids) {
        if (auto a = store_.find_answer(id)) answers.emplace(id, std::move(*a));
    }

    std::vector<AssessmentRecord> pending;
    for (auto& r : store_.records_for_job(job.id)) {
        if (r.status == RecordStatus::pending) pending.push_back(std::move(r));
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (auto i = next++; i < pending.size(); i = next++) {
            const auto& record = pending[i];
            auto answer = answers.find(record.answer_id);
            try {
                if (answer == answers.end()) {
                    fail(ErrorCode::answer_not_found, "answer '" + record.answer_id + "' vanished");
                }
                assess_record(record, *question, answer->second, job.prompt_suffix);
            } catch (const std::exception& e) {
                spdlog::error("record {} failed outside the provider call: {}", record.id, e.what());
            }
        }
    };

    const auto threads = std::min(options_.workers, std::max<std::size_t>(pending.size(), 1));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }

    store_.transition_job(job.id, JobState::running, JobState::terminal);
}

void AssessmentEngine::assess_record(const AssessmentRecord& pending, const Question& question,
                                     const StudentAnswer& answer,
                                     const std::string& prompt_suffix) {
    AssessmentRecord running = pending;
    running.status = RecordStatus::running;
    if (!store_.update_record(running, RecordStatus::pending)) return;  // claimed elsewhere

    AssessmentRecord done = running;
    try {
        auto prompt = compiler_.compile_assessment_prompt(question, answer);
        prompt += prompt_suffix;
        const auto completion = gateway_.generate(pending.provider_id, prompt);
        done.raw_output = completion.text;
        const auto outcome = parse_model_output(completion.text, question.max_mark);
        if (const auto* parsed = std::get_if<ParsedAssessment>(&outcome)) {
            done.status = RecordStatus::completed;
            done.mark = parsed->mark;
            done.rationale = parsed->rationale;
        } else {
            done.status = RecordStatus::parse_failed;
            done.failure_reason = std::string(to_string(std::get<ParseFailure>(outcome)));
        }
    } catch (const Error& e) {
        done.status = RecordStatus::provider_failed;
        done.failure_reason = std::string(to_string(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
        done.status = RecordStatus::provider_failed;
        done.failure_reason = std::string("internal: ") + e.what();
    }
    done.finished_at = now();
    if (!store_.update_record(done, RecordStatus::running)) {
        spdlog::warn("record {} changed state while running; result dropped", done.id);
    }
}

BatchStatus AssessmentEngine::get_batch_status(std::string_view job_id) const {
    auto job = store_.find_job(job_id);
    if (!job) fail(ErrorCode::job_not_found, "no job '" + std::string(job_id) + "'");
    BatchStatus status;
    status.records = store_.records_for_job(job_id);
    // A job may have finished between the two reads; report the state that
    // matches the record snapshot.
    job->state = store_.find_job(job_id)->state;
    if (job->state == JobState::terminal &&
        !std::all_of(status.records.begin(), status.records.end(),
                     [](const AssessmentRecord& r) { return r.terminal(); })) {
        status.records = store_.records_for_job(job_id);
    }
    status.job = std::move(*job);
    for (const auto& r : status.records) ++status.counts[r.status];
    return status;
}

std::vector<std::string> AssessmentEngine::recover() {
    const auto reset = store_.reset_running_records();
    std::vector<std::string> resumed;
    for (const auto& job : store_.jobs_in_state(JobState::running)) {
        if (store_.transition_job(job.id, JobState::running, JobState::created)) {
            resumed.push_back(job.id);
        }
    }
    if (reset > 0 || !resumed.empty()) {
        spdlog::info("recovery: reset {} running records, {} interrupted jobs", reset,
                     resumed.size());
    }
    return resumed;
}

} // namespace gradelens
