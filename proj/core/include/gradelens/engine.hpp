#pragma once

#include <cstddef>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gradelens/gateway.hpp"
#include "gradelens/model.hpp"
#include "gradelens/prompt.hpp"
#include "gradelens/store.hpp"

namespace gradelens {

struct EngineOptions {
    std::size_t workers = 8;
};

struct BatchStatus {
    BatchJob job;
    std::map<RecordStatus, std::size_t> counts;
    std::vector<AssessmentRecord> records;

    bool terminal() const { return job.state == JobState::terminal; }
};

struct BatchRequest {
    std::string question_id;
    // empty = every answer uploaded for the question
    std::vector<std::string> answer_ids;
    std::vector<std::string> provider_ids;
    RecordOrigin origin = RecordOrigin::batch;
    std::string prompt_suffix;
};

// Runs assessment jobs: one record per (answer, provider), executed by a
// bounded worker pool. Status moves are compare-and-set in the store, so two
// engines over one store never run the same record twice.
class AssessmentEngine {
public:
    AssessmentEngine(Store& store, ModelGateway& gateway, const PromptCompiler& compiler,
                     EngineOptions options = {});
    ~AssessmentEngine();

    AssessmentEngine(const AssessmentEngine&) = delete;
    AssessmentEngine& operator=(const AssessmentEngine&) = delete;

    // Validates everything before writing anything. Throws
    // Error(question_not_found | answer_not_found | empty_batch |
    // unknown_provider).
    BatchJob create_batch(const BatchRequest& request);

    // Runs the job to completion. A terminal job is returned unchanged;
    // a job already running throws Error(job_already_running).
    BatchStatus run_batch(std::string_view job_id);

    // Claims the job like run_batch, then executes it on a background
    // thread. Returns the status snapshot taken right after the claim.
    BatchStatus start_batch(std::string_view job_id);

    BatchStatus get_batch_status(std::string_view job_id) const;

    // Restart policy: running records go back to pending and interrupted jobs
    // become runnable again. Returns the ids of those jobs.
    std::vector<std::string> recover();

    // Blocks until background runs started by this engine finish.
    void wait_idle();

private:
    enum class Claim { claimed, already_terminal };

    Claim claim(std::string_view job_id);
    void execute(const BatchJob& job);
    void assess_record(const AssessmentRecord& pending, const Question& question,
                       const StudentAnswer& answer, const std::string& prompt_suffix);

    Store& store_;
    ModelGateway& gateway_;
    const PromptCompiler& compiler_;
    EngineOptions options_;

    std::mutex background_mutex_;
    std::vector<std::jthread> background_;
};

} // namespace gradelens
