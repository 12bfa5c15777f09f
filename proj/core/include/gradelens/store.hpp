#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gradelens/model.hpp"

namespace gradelens {

// Repository contract behind the service. Each call is one transaction;
// a read issued after a write returns sees that write. Implementations are
// thread-safe, and the SQLite one may be shared by several processes.
//
// Writes that would break a record invariant (completed without mark or
// rationale, illegal status move) throw Error(internal); id collisions throw
// Error(duplicate_id).
class Store {
public:
    virtual ~Store() = default;

    // Fresh id "<kind>-NNNNNNNN". Ids of one kind sort in creation order.
    virtual std::string next_id(std::string_view kind) = 0;

    virtual void insert_question(const Question& question) = 0;
    virtual std::optional<Question> find_question(std::string_view id) const = 0;
    virtual std::vector<Question> list_questions() const = 0;

    // All-or-nothing.
    virtual void insert_answers(std::span<const StudentAnswer> answers) = 0;
    virtual std::optional<StudentAnswer> find_answer(std::string_view id) const = 0;
    // Upload order.
    virtual std::vector<StudentAnswer> answers_for_question(std::string_view question_id) const = 0;

    // Persists the job together with its pending records.
    virtual void insert_job(const BatchJob& job, std::span<const AssessmentRecord> records) = 0;
    virtual std::optional<BatchJob> find_job(std::string_view id) const = 0;
    // Compare-and-set on the job state.
    virtual bool transition_job(std::string_view id, JobState from, JobState to) = 0;
    virtual std::vector<BatchJob> jobs_in_state(JobState state) const = 0;

    // Standalone records (human-authored rationales).
    virtual void insert_record(const AssessmentRecord& record) = 0;
    virtual std::optional<AssessmentRecord> find_record(std::string_view id) const = 0;
    // Each list is one consistent snapshot, ordered by id.
    virtual std::vector<AssessmentRecord> records_for_job(std::string_view job_id) const = 0;
    virtual std::vector<AssessmentRecord> records_for_answer(std::string_view answer_id) const = 0;
    virtual std::vector<AssessmentRecord> records_for_question(std::string_view question_id) const = 0;
    // Compare-and-set: writes `updated` only if the stored status equals
    // `expected` and expected -> updated.status is a legal move.
    virtual bool update_record(const AssessmentRecord& updated, RecordStatus expected) = 0;
    // Crash recovery: running -> pending. Returns the number of records reset.
    virtual std::size_t reset_running_records() = 0;

    // Append-only log.
    virtual void append_event(const AnnotationEvent& event) = 0;
    virtual std::vector<AnnotationEvent> events_for_question(std::string_view question_id) const = 0;
    virtual std::vector<AnnotationEvent> events_for_target(std::string_view target) const = 0;

    virtual void insert_session(const ChatSession& session) = 0;
    virtual std::optional<ChatSession> find_session(std::string_view id) const = 0;
    // Writes when the stored version equals session.version; the stored
    // version is then incremented.
    virtual bool update_session(const ChatSession& session) = 0;

    // Highlight cache, keyed by (record, mode); values are JSON documents.
    virtual void put_highlight(std::string_view record_id, std::string_view mode,
                               const std::string& document) = 0;
    virtual std::optional<std::string> find_highlight(std::string_view record_id,
                                                      std::string_view mode) const = 0;

    virtual void insert_user(const UserProfile& user) = 0;
    virtual std::optional<UserProfile> find_user(std::string_view id) const = 0;
    virtual std::optional<UserProfile> find_user_by_credential(std::string_view hash) const = 0;
    virtual std::vector<UserProfile> list_users() const = 0;
};

std::string format_id(std::string_view kind, std::int64_t sequence);

// Throws Error(internal) when the record breaks the persistence invariants.
void check_record_invariants(const AssessmentRecord& record);

std::unique_ptr<Store> make_memory_store();
// Creates the file if needed and applies pending schema migrations.
std::unique_ptr<Store> make_sqlite_store(const std::string& path);

// "memory:" (or empty), "sqlite:<path>" or "sqlite://<path>".
std::unique_ptr<Store> open_store(std::string_view database_url);

} // namespace gradelens
