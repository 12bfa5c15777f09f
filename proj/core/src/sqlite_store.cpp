#include <sqlite3.h>

#include <mutex>

#include <spdlog/spdlog.h>

#include "embedded_resources.hpp"
#include "gradelens/error.hpp"
#include "gradelens/json_io.hpp"
#include "gradelens/store.hpp"

namespace gradelens {

namespace {

struct Migration {
    int version;
    std::string_view sql;
};

constexpr Migration kMigrations[] = {
    {1, embedded::migration_001},
};

[[noreturn]] void store_error(sqlite3* db, std::string_view what) {
    fail(ErrorCode::store_failure, std::string(what) + ": " + sqlite3_errmsg(db));
}

class Statement {
public:
    Statement(sqlite3* db, std::string_view sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &stmt_, nullptr) !=
            SQLITE_OK) {
            store_error(db, "prepare");
        }
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    template <typename... Args>
    Statement& bind(const Args&... args) {
        int index = 0;
        (bind_one(++index, args), ...);
        return *this;
    }

    // true while rows are available
    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        store_error(db_, "step");
    }

    void run() {
        while (step()) {
        }
    }

    std::string text(int column) const {
        const auto* p = sqlite3_column_text(stmt_, column);
        return p ? std::string(reinterpret_cast<const char*>(p),
                               static_cast<std::size_t>(sqlite3_column_bytes(stmt_, column)))
                 : std::string();
    }
    std::int64_t integer(int column) const { return sqlite3_column_int64(stmt_, column); }

private:
    void bind_one(int index, std::string_view value) {
        check(sqlite3_bind_text(stmt_, index, value.data(), static_cast<int>(value.size()),
                                SQLITE_TRANSIENT));
    }
    void bind_one(int index, const std::string& value) { bind_one(index, std::string_view(value)); }
    void bind_one(int index, const char* value) { bind_one(index, std::string_view(value)); }
    void bind_one(int index, std::int64_t value) {
        check(sqlite3_bind_int64(stmt_, index, value));
    }
    void bind_one(int index, int value) { check(sqlite3_bind_int(stmt_, index, value)); }

    void check(int rc) {
        if (rc != SQLITE_OK) store_error(db_, "bind");
    }

    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

class SqliteStore final : public Store {
public:
    explicit SqliteStore(const std::string& path) {
        if (sqlite3_open_v2(path.c_str(), &db_,
                            SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                            nullptr) != SQLITE_OK) {
            std::string message = db_ ? sqlite3_errmsg(db_) : "out of memory";
            sqlite3_close(db_);
            fail(ErrorCode::store_failure, "cannot open database '" + path + "': " + message);
        }
        sqlite3_busy_timeout(db_, 15'000);
        exec("PRAGMA journal_mode=WAL");
        exec("PRAGMA synchronous=NORMAL");
        exec("PRAGMA foreign_keys=ON");
        migrate();
    }

    ~SqliteStore() override { sqlite3_close(db_); }

    std::string next_id(std::string_view kind) override {
        std::lock_guard lock(mutex_);
        Statement stmt(db_,
                       "INSERT INTO id_counters(kind, value) VALUES(?, 1) "
                       "ON CONFLICT(kind) DO UPDATE SET value = value + 1 RETURNING value");
        stmt.bind(kind);
        if (!stmt.step()) store_error(db_, "next_id");
        const auto value = stmt.integer(0);
        stmt.run();
        return format_id(kind, value);
    }

    void insert_question(const Question& question) override {
        std::lock_guard lock(mutex_);
        Transaction tx(*this);
        if (exists("questions", question.id)) duplicate("question", question.id);
        Statement(db_, "INSERT INTO questions(id, body) VALUES(?, ?)")
            .bind(question.id, Json(question).dump())
            .run();
        tx.commit();
    }

    std::optional<Question> find_question(std::string_view id) const override {
        return find_one<Question>("SELECT body FROM questions WHERE id = ?", id);
    }

    std::vector<Question> list_questions() const override {
        return find_many<Question>("SELECT body FROM questions ORDER BY seq", std::nullopt);
    }

    void insert_answers(std::span<const StudentAnswer> answers) override {
        std::lock_guard lock(mutex_);
        Transaction tx(*this);
        for (const auto& a : answers) {
            if (exists("answers", a.id)) duplicate("answer", a.id);
            Statement(db_, "INSERT INTO answers(id, question_id, body) VALUES(?, ?, ?)")
                .bind(a.id, a.question_id, Json(a).dump())
                .run();
        }
        tx.commit();
    }

    std::optional<StudentAnswer> find_answer(std::string_view id) const override {
        return find_one<StudentAnswer>("SELECT body FROM answers WHERE id = ?", id);
    }

    std::vector<StudentAnswer> answers_for_question(std::string_view question_id) const override {
        return find_many<StudentAnswer>(
            "SELECT body FROM answers WHERE question_id = ? ORDER BY seq", question_id);
    }

    void insert_job(const BatchJob& job, std::span<const AssessmentRecord> records) override {
        for (const auto& r : records) check_record_invariants(r);
        std::lock_guard lock(mutex_);
        Transaction tx(*this);
        if (exists("jobs", job.id)) duplicate("job", job.id);
        Statement(db_, "INSERT INTO jobs(id, state, body) VALUES(?, ?, ?)")
            .bind(job.id, to_string(job.state), Json(job).dump())
            .run();
        for (const auto& r : records) insert_record_locked(r);
        tx.commit();
    }

    std::optional<BatchJob> find_job(std::string_view id) const override {
        std::lock_guard lock(mutex_);
        Statement stmt(db_, "SELECT state, body FROM jobs WHERE id = ?");
        stmt.bind(id);
        if (!stmt.step()) return std::nullopt;
        return job_from_row(stmt);
    }

    bool transition_job(std::string_view id, JobState from, JobState to) override {
        std::lock_guard lock(mutex_);
        Statement(db_, "UPDATE jobs SET state = ? WHERE id = ? AND state = ?")
            .bind(to_string(to), id, to_string(from))
            .run();
        return sqlite3_changes(db_) == 1;
    }

    std::vector<BatchJob> jobs_in_state(JobState state) const override {
        std::lock_guard lock(mutex_);
        Statement stmt(db_, "SELECT state, body FROM jobs WHERE state = ? ORDER BY id");
        stmt.bind(to_string(state));
        std::vector<BatchJob> out;
        while (stmt.step()) out.push_back(job_from_row(stmt));
        return out;
    }

    void insert_record(const AssessmentRecord& record) override {
        check_record_invariants(record);
        std::lock_guard lock(mutex_);
        Transaction tx(*this);
        insert_record_locked(record);
        tx.commit();
    }

    std::optional<AssessmentRecord> find_record(std::string_view id) const override {
        return find_one<AssessmentRecord>("SELECT body FROM records WHERE id = ?", id);
    }

    std::vector<AssessmentRecord> records_for_job(std::string_view job_id) const override {
        return find_many<AssessmentRecord>("SELECT body FROM records WHERE job_id = ? ORDER BY id",
                                           job_id);
    }

    std::vector<AssessmentRecord> records_for_answer(std::string_view answer_id) const override {
        return find_many<AssessmentRecord>(
            "SELECT body FROM records WHERE answer_id = ? ORDER BY id", answer_id);
    }

    std::vector<AssessmentRecord> records_for_question(std::string_view question_id) const override {
        return find_many<AssessmentRecord>(
            "SELECT body FROM records WHERE question_id = ? ORDER BY id", question_id);
    }

    bool update_record(const AssessmentRecord& updated, RecordStatus expected) override {
        check_record_invariants(updated);
        if (!is_valid_transition(expected, updated.status)) {
            fail(ErrorCode::internal, "illegal status move " + std::string(to_string(expected)) +
                                          " -> " + std::string(to_string(updated.status)));
        }
        std::lock_guard lock(mutex_);
        Statement(db_, "UPDATE records SET status = ?, body = ? WHERE id = ? AND status = ?")
            .bind(to_string(updated.status), Json(updated).dump(), updated.id, to_string(expected))
            .run();
        return sqlite3_changes(db_) == 1;
    }

    std::size_t reset_running_records() override {
        std::lock_guard lock(mutex_);
        Transaction tx(*this);
        std::vector<AssessmentRecord> running;
        {
            Statement stmt(db_, "SELECT body FROM records WHERE status = 'running'");
            while (stmt.step()) running.push_back(Json::parse(stmt.text(0)).get<AssessmentRecord>());
        }
        for (auto& r : running) {
            r.status = RecordStatus::pending;
            Statement(db_, "UPDATE records SET status = 'pending', body = ? WHERE id = ?")
                .bind(Json(r).dump(), r.id)
                .run();
        }
        tx.commit();
        return running.size();
    }

    void append_event(const AnnotationEvent& event) override {
        std::lock_guard lock(mutex_);
        Transaction tx(*this);
        if (exists("annotation_events", event.id)) duplicate("event", event.id);
        Statement(db_,
                  "INSERT INTO annotation_events(id, question_id, target, body) VALUES(?, ?, ?, ?)")
            .bind(event.id, event.question_id, event.target, Json(event).dump())
            .run();
        tx.commit();
    }

    std::vector<AnnotationEvent> events_for_question(std::string_view question_id) const override {
        return find_many<AnnotationEvent>(
            "SELECT body FROM annotation_events WHERE question_id = ? ORDER BY seq", question_id);
    }

    std::vector<AnnotationEvent> events_for_target(std::string_view target) const override {
        return find_many<AnnotationEvent>(
            "SELECT body FROM annotation_events WHERE target = ? ORDER BY seq", target);
    }

    void insert_session(const ChatSession& session) override {
        std::lock_guard lock(mutex_);
        Transaction tx(*this);
        if (exists("chat_sessions", session.id)) duplicate("session", session.id);
        Statement(db_, "INSERT INTO chat_sessions(id, version, body) VALUES(?, ?, ?)")
            .bind(session.id, session.version, Json(session).dump())
            .run();
        tx.commit();
    }

    std::optional<ChatSession> find_session(std::string_view id) const override {
        std::lock_guard lock(mutex_);
        Statement stmt(db_, "SELECT version, body FROM chat_sessions WHERE id = ?");
        stmt.bind(id);
        if (!stmt.step()) return std::nullopt;
        auto session = Json::parse(stmt.text(1)).get<ChatSession>();
        session.version = stmt.integer(0);
        return session;
    }

    bool update_session(const ChatSession& session) override {
        std::lock_guard lock(mutex_);
        Statement(db_,
                  "UPDATE chat_sessions SET version = version + 1, body = ? "
                  "WHERE id = ? AND version = ?")
            .bind(Json(session).dump(), session.id, session.version)
            .run();
        return sqlite3_changes(db_) == 1;
    }

    void put_highlight(std::string_view record_id, std::string_view mode,
                       const std::string& document) override {
        std::lock_guard lock(mutex_);
        Statement(db_,
                  "INSERT INTO highlights(record_id, mode, body) VALUES(?, ?, ?) "
                  "ON CONFLICT(record_id, mode) DO UPDATE SET body = excluded.body")
            .bind(record_id, mode, document)
            .run();
    }

    std::optional<std::string> find_highlight(std::string_view record_id,
                                              std::string_view mode) const override {
        std::lock_guard lock(mutex_);
        Statement stmt(db_, "SELECT body FROM highlights WHERE record_id = ? AND mode = ?");
        stmt.bind(record_id, mode);
        if (!stmt.step()) return std::nullopt;
        return stmt.text(0);
    }

    void insert_user(const UserProfile& user) override {
        std::lock_guard lock(mutex_);
        Transaction tx(*this);
        if (exists("users", user.id)) duplicate("user", user.id);
        {
            Statement stmt(db_, "SELECT 1 FROM users WHERE credential_hash = ?");
            stmt.bind(user.credential_hash);
            if (stmt.step()) duplicate("credential of user", user.id);
        }
        Statement(db_, "INSERT INTO users(id, credential_hash, body) VALUES(?, ?, ?)")
            .bind(user.id, user.credential_hash, Json(user).dump())
            .run();
        tx.commit();
    }

    std::optional<UserProfile> find_user(std::string_view id) const override {
        return find_user_where("id", id);
    }

    std::optional<UserProfile> find_user_by_credential(std::string_view hash) const override {
        return find_user_where("credential_hash", hash);
    }

    std::vector<UserProfile> list_users() const override {
        std::lock_guard lock(mutex_);
        Statement stmt(db_, "SELECT credential_hash, body FROM users ORDER BY id");
        std::vector<UserProfile> out;
        while (stmt.step()) out.push_back(user_from_row(stmt));
        return out;
    }

private:
    class Transaction {
    public:
        explicit Transaction(SqliteStore& store) : store_(store) {
            store_.exec("BEGIN IMMEDIATE");
        }
        ~Transaction() {
            if (!done_) sqlite3_exec(store_.db_, "ROLLBACK", nullptr, nullptr, nullptr);
        }
        void commit() {
            store_.exec("COMMIT");
            done_ = true;
        }

    private:
        SqliteStore& store_;
        bool done_ = false;
    };

    void exec(const std::string& sql) {
        char* message = nullptr;
        if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &message) != SQLITE_OK) {
            std::string text = message ? message : "unknown error";
            sqlite3_free(message);
            fail(ErrorCode::store_failure, "sqlite: " + text);
        }
    }

    void migrate() {
        std::lock_guard lock(mutex_);
        exec("CREATE TABLE IF NOT EXISTS schema_migrations (version INTEGER PRIMARY KEY)");
        for (const auto& m : kMigrations) {
            Transaction tx(*this);
            Statement check(db_, "SELECT 1 FROM schema_migrations WHERE version = ?");
            check.bind(m.version);
            if (check.step()) continue;
            exec(std::string(m.sql));
            Statement(db_, "INSERT INTO schema_migrations(version) VALUES(?)").bind(m.version).run();
            tx.commit();
            spdlog::info("applied schema migration {}", m.version);
        }
    }

    // callers hold mutex_
    bool exists(std::string_view table, std::string_view id) {
        Statement stmt(db_, "SELECT 1 FROM " + std::string(table) + " WHERE id = ?");
        stmt.bind(id);
        return stmt.step();
    }

    void insert_record_locked(const AssessmentRecord& r) {
        if (exists("records", r.id)) duplicate("record", r.id);
        Statement(db_,
                  "INSERT INTO records(id, job_id, answer_id, question_id, status, body) "
                  "VALUES(?, ?, ?, ?, ?, ?)")
            .bind(r.id, r.job_id, r.answer_id, r.question_id, to_string(r.status), Json(r).dump())
            .run();
    }

    template <typename T>
    std::optional<T> find_one(std::string_view sql, std::string_view key) const {
        std::lock_guard lock(mutex_);
        Statement stmt(db_, sql);
        stmt.bind(key);
        if (!stmt.step()) return std::nullopt;
        return Json::parse(stmt.text(0)).get<T>();
    }

    template <typename T>
    std::vector<T> find_many(std::string_view sql, std::optional<std::string_view> key) const {
        std::lock_guard lock(mutex_);
        Statement stmt(db_, sql);
        if (key) stmt.bind(*key);
        std::vector<T> out;
        while (stmt.step()) out.push_back(Json::parse(stmt.text(0)).get<T>());
        return out;
    }

    static BatchJob job_from_row(const Statement& stmt) {
        auto job = Json::parse(stmt.text(1)).get<BatchJob>();
        job.state = parse_job_state(stmt.text(0)).value_or(JobState::created);
        return job;
    }

    static UserProfile user_from_row(const Statement& stmt) {
        auto user = Json::parse(stmt.text(1)).get<UserProfile>();
        user.credential_hash = stmt.text(0);
        return user;
    }

    std::optional<UserProfile> find_user_where(std::string_view column, std::string_view key) const {
        std::lock_guard lock(mutex_);
        Statement stmt(db_, "SELECT credential_hash, body FROM users WHERE " + std::string(column) +
                                " = ?");
        stmt.bind(key);
        if (!stmt.step()) return std::nullopt;
        return user_from_row(stmt);
    }

    [[noreturn]] static void duplicate(std::string_view what, const std::string& id) {
        fail(ErrorCode::duplicate_id, std::string(what) + " '" + id + "' already exists");
    }

    sqlite3* db_ = nullptr;
    mutable std::recursive_mutex mutex_;
};

} // namespace

std::unique_ptr<Store> make_sqlite_store(const std::string& path) {
    return std::make_unique<SqliteStore>(path);
}

} // namespace gradelens
