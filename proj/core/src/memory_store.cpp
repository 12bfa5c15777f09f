#include <algorithm>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

#include "gradelens/error.hpp"
#include "gradelens/store.hpp"

namespace gradelens {

namespace {

// std::map keeps records ordered by id, which is creation order.
class MemoryStore final : public Store {
public:
    std::string next_id(std::string_view kind) override {
        std::unique_lock lock(mutex_);
        return format_id(kind, ++counters_[std::string(kind)]);
    }

    void insert_question(const Question& question) override {
        std::unique_lock lock(mutex_);
        if (questions_.contains(question.id)) duplicate("question", question.id);
        questions_.emplace(question.id, question);
        question_order_.push_back(question.id);
    }

    std::optional<Question> find_question(std::string_view id) const override {
        std::shared_lock lock(mutex_);
        return find_in(questions_, id);
    }

    std::vector<Question> list_questions() const override {
        std::shared_lock lock(mutex_);
        std::vector<Question> out;
        for (const auto& id : question_order_) out.push_back(questions_.at(id));
        return out;
    }

    void insert_answers(std::span<const StudentAnswer> answers) override {
        std::unique_lock lock(mutex_);
        for (const auto& a : answers) {
            if (answers_.contains(a.id)) duplicate("answer", a.id);
        }
        for (const auto& a : answers) {
            answers_.emplace(a.id, a);
            answer_order_[a.question_id].push_back(a.id);
        }
    }

    std::optional<StudentAnswer> find_answer(std::string_view id) const override {
        std::shared_lock lock(mutex_);
        return find_in(answers_, id);
    }

    std::vector<StudentAnswer> answers_for_question(std::string_view question_id) const override {
        std::shared_lock lock(mutex_);
        std::vector<StudentAnswer> out;
        auto it = answer_order_.find(std::string(question_id));
        if (it == answer_order_.end()) return out;
        for (const auto& id : it->second) out.push_back(answers_.at(id));
        return out;
    }

    void insert_job(const BatchJob& job, std::span<const AssessmentRecord> records) override {
        std::unique_lock lock(mutex_);
        if (jobs_.contains(job.id)) duplicate("job", job.id);
        for (const auto& r : records) {
            check_record_invariants(r);
            if (records_.contains(r.id)) duplicate("record", r.id);
        }
        jobs_.emplace(job.id, job);
        for (const auto& r : records) records_.emplace(r.id, r);
    }

    std::optional<BatchJob> find_job(std::string_view id) const override {
        std::shared_lock lock(mutex_);
        return find_in(jobs_, id);
    }

    bool transition_job(std::string_view id, JobState from, JobState to) override {
        std::unique_lock lock(mutex_);
        auto it = jobs_.find(id);
        if (it == jobs_.end() || it->second.state != from) return false;
        it->second.state = to;
        return true;
    }

    std::vector<BatchJob> jobs_in_state(JobState state) const override {
        std::shared_lock lock(mutex_);
        std::vector<BatchJob> out;
        for (const auto& [id, job] : jobs_) {
            if (job.state == state) out.push_back(job);
        }
        return out;
    }

    void insert_record(const AssessmentRecord& record) override {
        std::unique_lock lock(mutex_);
        check_record_invariants(record);
        if (records_.contains(record.id)) duplicate("record", record.id);
        records_.emplace(record.id, record);
    }

    std::optional<AssessmentRecord> find_record(std::string_view id) const override {
        std::shared_lock lock(mutex_);
        return find_in(records_, id);
    }

    std::vector<AssessmentRecord> records_for_job(std::string_view job_id) const override {
        return select_records([&](const AssessmentRecord& r) { return r.job_id == job_id; });
    }

    std::vector<AssessmentRecord> records_for_answer(std::string_view answer_id) const override {
        return select_records([&](const AssessmentRecord& r) { return r.answer_id == answer_id; });
    }

    std::vector<AssessmentRecord> records_for_question(std::string_view question_id) const override {
        return select_records(
            [&](const AssessmentRecord& r) { return r.question_id == question_id; });
    }

    bool update_record(const AssessmentRecord& updated, RecordStatus expected) override {
        check_record_invariants(updated);
        if (!is_valid_transition(expected, updated.status)) {
            fail(ErrorCode::internal, "illegal status move " + std::string(to_string(expected)) +
                                          " -> " + std::string(to_string(updated.status)));
        }
        std::unique_lock lock(mutex_);
        auto it = records_.find(updated.id);
        if (it == records_.end() || it->second.status != expected) return false;
        it->second = updated;
        return true;
    }

    std::size_t reset_running_records() override {
        std::unique_lock lock(mutex_);
        std::size_t count = 0;
        for (auto& [id, r] : records_) {
            if (r.status == RecordStatus::running) {
                r.status = RecordStatus::pending;
                ++count;
            }
        }
        return count;
    }

    void append_event(const AnnotationEvent& event) override {
        std::unique_lock lock(mutex_);
        if (std::any_of(events_.begin(), events_.end(),
                        [&](const AnnotationEvent& e) { return e.id == event.id; })) {
            duplicate("event", event.id);
        }
        events_.push_back(event);
    }

    std::vector<AnnotationEvent> events_for_question(std::string_view question_id) const override {
        std::shared_lock lock(mutex_);
        std::vector<AnnotationEvent> out;
        std::copy_if(events_.begin(), events_.end(), std::back_inserter(out),
                     [&](const AnnotationEvent& e) { return e.question_id == question_id; });
        return out;
    }

    std::vector<AnnotationEvent> events_for_target(std::string_view target) const override {
        std::shared_lock lock(mutex_);
        std::vector<AnnotationEvent> out;
        std::copy_if(events_.begin(), events_.end(), std::back_inserter(out),
                     [&](const AnnotationEvent& e) { return e.target == target; });
        return out;
    }

    void insert_session(const ChatSession& session) override {
        std::unique_lock lock(mutex_);
        if (sessions_.contains(session.id)) duplicate("session", session.id);
        sessions_.emplace(session.id, session);
    }

    std::optional<ChatSession> find_session(std::string_view id) const override {
        std::shared_lock lock(mutex_);
        return find_in(sessions_, id);
    }

    bool update_session(const ChatSession& session) override {
        std::unique_lock lock(mutex_);
        auto it = sessions_.find(session.id);
        if (it == sessions_.end() || it->second.version != session.version) return false;
        it->second = session;
        ++it->second.version;
        return true;
    }

    void put_highlight(std::string_view record_id, std::string_view mode,
                       const std::string& document) override {
        std::unique_lock lock(mutex_);
        highlights_[highlight_key(record_id, mode)] = document;
    }

    std::optional<std::string> find_highlight(std::string_view record_id,
                                              std::string_view mode) const override {
        std::shared_lock lock(mutex_);
        return find_in(highlights_, highlight_key(record_id, mode));
    }

    void insert_user(const UserProfile& user) override {
        std::unique_lock lock(mutex_);
        if (users_.contains(user.id)) duplicate("user", user.id);
        for (const auto& [id, u] : users_) {
            if (u.credential_hash == user.credential_hash) duplicate("credential of user", user.id);
        }
        users_.emplace(user.id, user);
    }

    std::optional<UserProfile> find_user(std::string_view id) const override {
        std::shared_lock lock(mutex_);
        return find_in(users_, id);
    }

    std::optional<UserProfile> find_user_by_credential(std::string_view hash) const override {
        std::shared_lock lock(mutex_);
        for (const auto& [id, u] : users_) {
            if (u.credential_hash == hash) return u;
        }
        return std::nullopt;
    }

    std::vector<UserProfile> list_users() const override {
        std::shared_lock lock(mutex_);
        std::vector<UserProfile> out;
        for (const auto& [id, u] : users_) out.push_back(u);
        return out;
    }

private:
    template <typename Map, typename Key>
    static std::optional<typename Map::mapped_type> find_in(const Map& map, const Key& key) {
        auto it = map.find(key);
        if (it == map.end()) return std::nullopt;
        return it->second;
    }

    [[noreturn]] static void duplicate(std::string_view what, const std::string& id) {
        fail(ErrorCode::duplicate_id, std::string(what) + " '" + id + "' already exists");
    }

    static std::string highlight_key(std::string_view record_id, std::string_view mode) {
        return std::string(record_id) + '\x1f' + std::string(mode);
    }

    template <typename Pred>
    std::vector<AssessmentRecord> select_records(Pred pred) const {
        std::shared_lock lock(mutex_);
        std::vector<AssessmentRecord> out;
        for (const auto& [id, r] : records_) {
            if (pred(r)) out.push_back(r);
        }
        return out;
    }

    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, std::int64_t> counters_;
    std::map<std::string, Question, std::less<>> questions_;
    std::vector<std::string> question_order_;
    std::map<std::string, StudentAnswer, std::less<>> answers_;
    std::unordered_map<std::string, std::vector<std::string>> answer_order_;
    std::map<std::string, BatchJob, std::less<>> jobs_;
    std::map<std::string, AssessmentRecord, std::less<>> records_;
    std::vector<AnnotationEvent> events_;
    std::map<std::string, ChatSession, std::less<>> sessions_;
    std::map<std::string, std::string, std::less<>> highlights_;
    std::map<std::string, UserProfile, std::less<>> users_;
};

} // namespace

std::unique_ptr<Store> make_memory_store() { return std::make_unique<MemoryStore>(); }

} // namespace gradelens
