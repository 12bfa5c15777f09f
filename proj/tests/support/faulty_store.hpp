#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>

#include "gradelens/error.hpp"
#include "gradelens/store.hpp"

namespace fixtures {

// Forwards to an inner store. While armed, every call except the user
// lookups used for authentication throws Error(code).
class FaultyStore : public gradelens::Store {
public:
    explicit FaultyStore(std::unique_ptr<gradelens::Store> inner) : inner_(std::move(inner)) {}

    void arm(gradelens::ErrorCode code) {
        code_ = code;
        armed_ = true;
    }
    void disarm() { armed_ = false; }

    std::string next_id(std::string_view kind) override { return check(), inner_->next_id(kind); }
    void insert_question(const gradelens::Question& q) override { check(), inner_->insert_question(q); }
    std::optional<gradelens::Question> find_question(std::string_view id) const override {
        return check(), inner_->find_question(id);
    }
    std::vector<gradelens::Question> list_questions() const override { return check(), inner_->list_questions(); }
    void insert_answers(std::span<const gradelens::StudentAnswer> a) override { check(), inner_->insert_answers(a); }
    std::optional<gradelens::StudentAnswer> find_answer(std::string_view id) const override {
        return check(), inner_->find_answer(id);
    }
    std::vector<gradelens::StudentAnswer> answers_for_question(std::string_view id) const override {
        return check(), inner_->answers_for_question(id);
    }
    void insert_job(const gradelens::BatchJob& job, std::span<const gradelens::AssessmentRecord> r) override {
        check(), inner_->insert_job(job, r);
    }
    std::optional<gradelens::BatchJob> find_job(std::string_view id) const override {
        return check(), inner_->find_job(id);
    }
    bool transition_job(std::string_view id, gradelens::JobState from, gradelens::JobState to) override {
        return check(), inner_->transition_job(id, from, to);
    }
    std::vector<gradelens::BatchJob> jobs_in_state(gradelens::JobState s) const override {
        return check(), inner_->jobs_in_state(s);
    }
    void insert_record(const gradelens::AssessmentRecord& r) override { check(), inner_->insert_record(r); }
    std::optional<gradelens::AssessmentRecord> find_record(std::string_view id) const override {
        return check(), inner_->find_record(id);
    }
    std::vector<gradelens::AssessmentRecord> records_for_job(std::string_view id) const override {
        return check(), inner_->records_for_job(id);
    }
    std::vector<gradelens::AssessmentRecord> records_for_answer(std::string_view id) const override {
        return check(), inner_->records_for_answer(id);
    }
    std::vector<gradelens::AssessmentRecord> records_for_question(std::string_view id) const override {
        return check(), inner_->records_for_question(id);
    }
    bool update_record(const gradelens::AssessmentRecord& r, gradelens::RecordStatus expected) override {
        return check(), inner_->update_record(r, expected);
    }
    std::size_t reset_running_records() override { return check(), inner_->reset_running_records(); }
    void append_event(const gradelens::AnnotationEvent& e) override { check(), inner_->append_event(e); }
    std::vector<gradelens::AnnotationEvent> events_for_question(std::string_view id) const override {
        return check(), inner_->events_for_question(id);
    }
    std::vector<gradelens::AnnotationEvent> events_for_target(std::string_view id) const override {
        return check(), inner_->events_for_target(id);
    }
    void insert_session(const gradelens::ChatSession& s) override { check(), inner_->insert_session(s); }
    std::optional<gradelens::ChatSession> find_session(std::string_view id) const override {
        return check(), inner_->find_session(id);
    }
    bool update_session(const gradelens::ChatSession& s) override { return check(), inner_->update_session(s); }
    void put_highlight(std::string_view id, std::string_view mode, const std::string& doc) override {
        check(), inner_->put_highlight(id, mode, doc);
    }
    std::optional<std::string> find_highlight(std::string_view id, std::string_view mode) const override {
        return check(), inner_->find_highlight(id, mode);
    }
    void insert_user(const gradelens::UserProfile& u) override { inner_->insert_user(u); }
    std::optional<gradelens::UserProfile> find_user(std::string_view id) const override {
        return inner_->find_user(id);
    }
    std::optional<gradelens::UserProfile> find_user_by_credential(std::string_view hash) const override {
        return inner_->find_user_by_credential(hash);
    }
    std::vector<gradelens::UserProfile> list_users() const override { return inner_->list_users(); }

private:
    void check() const {
        if (armed_) gradelens::fail(code_, "injected failure");
    }

    std::unique_ptr<gradelens::Store> inner_;
    std::atomic<bool> armed_{false};
    gradelens::ErrorCode code_ = gradelens::ErrorCode::internal;
};

// Status each error code must map to, written out independently of the
// server's own table.
inline int expected_status(gradelens::ErrorCode code) {
    using gradelens::ErrorCode;
    static const std::map<ErrorCode, int> table{
        {ErrorCode::bad_request, 400},          {ErrorCode::invalid_question, 400},
        {ErrorCode::invalid_answers, 400},      {ErrorCode::invalid_config, 400},
        {ErrorCode::invalid_tagging_request, 400}, {ErrorCode::unknown_provider, 400},
        {ErrorCode::empty_batch, 400},          {ErrorCode::out_of_range, 400},
        {ErrorCode::empty_rationale, 400},      {ErrorCode::empty_pair_set, 400},
        {ErrorCode::single_class_range, 400},   {ErrorCode::template_error, 500},
        {ErrorCode::unauthorized, 401},         {ErrorCode::question_not_found, 404},
        {ErrorCode::answer_not_found, 404},     {ErrorCode::record_not_found, 404},
        {ErrorCode::job_not_found, 404},        {ErrorCode::session_not_found, 404},
        {ErrorCode::highlight_not_found, 404},  {ErrorCode::no_evaluable_records, 404},
        {ErrorCode::job_already_running, 409},  {ErrorCode::record_not_completed, 409},
        {ErrorCode::session_busy, 409},         {ErrorCode::no_imported_context, 409},
        {ErrorCode::duplicate_id, 409},         {ErrorCode::provider_failed, 502},
        {ErrorCode::timeout, 502},              {ErrorCode::tagging_parse_failed, 502},
        {ErrorCode::store_failure, 500},        {ErrorCode::internal, 500}};
    return table.at(code);
}

} // namespace fixtures
