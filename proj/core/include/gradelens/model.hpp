#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gradelens {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

Timestamp now();

struct RubricItem {
    int points = 0;
    std::string description;

    bool operator==(const RubricItem&) const = default;
};

// A short-answer question. Valid marks are the integers in [0, max_mark];
// max_mark is stored explicitly because rubric items may be alternatives.
struct Question {
    std::string id;
    std::string prompt_text;
    std::vector<std::string> key_elements;
    std::vector<RubricItem> rubric;
    int max_mark = 0;

    bool mark_in_range(int mark) const { return mark >= 0 && mark <= max_mark; }
    bool operator==(const Question&) const = default;
};

struct StudentAnswer {
    std::string id;
    std::string question_id;
    std::string text;
    std::optional<int> gold_mark;

    bool operator==(const StudentAnswer&) const = default;
};

enum class RecordStatus { pending, running, completed, parse_failed, provider_failed };

// Where a record came from. Only batch records feed the metrics report.
enum class RecordOrigin { batch, chat, human };

struct AssessmentRecord {
    std::string id;
    std::string job_id;
    std::string question_id;
    std::string answer_id;
    std::string provider_id;
    RecordStatus status = RecordStatus::pending;
    RecordOrigin origin = RecordOrigin::batch;
    std::optional<int> mark;
    std::optional<std::string> rationale;
    std::optional<std::string> raw_output;
    std::optional<std::string> failure_reason;
    Timestamp created_at{};
    std::optional<Timestamp> finished_at;

    bool terminal() const;
    bool operator==(const AssessmentRecord&) const = default;
};

bool is_terminal(RecordStatus status);

// Legal moves are pending -> running -> {completed, parse_failed, provider_failed}.
bool is_valid_transition(RecordStatus from, RecordStatus to);

// Checks the record-level invariant enforced at the persistence boundary:
// completed <=> mark and rationale present.
bool record_is_consistent(const AssessmentRecord& record);

enum class JobState { created, running, terminal };

struct BatchJob {
    std::string id;
    std::string question_id;
    std::vector<std::string> answer_ids;
    std::vector<std::string> provider_ids;
    JobState state = JobState::created;
    RecordOrigin origin = RecordOrigin::batch;
    // Appended to every assessment prompt of the job (chat regeneration).
    std::string prompt_suffix;
    Timestamp created_at{};

    std::size_t record_count() const { return answer_ids.size() * provider_ids.size(); }
    bool operator==(const BatchJob&) const = default;
};

enum class PreferenceFlag { preferred, not_preferred };

struct GoldCorrection {
    int mark = 0;
    bool operator==(const GoldCorrection&) const = default;
};

struct PreferenceMark {
    PreferenceFlag flag = PreferenceFlag::preferred;
    bool operator==(const PreferenceMark&) const = default;
};

struct AuthoredRationale {
    int mark = 0;
    std::string text;
    // The "human" record created alongside the event.
    std::string record_id;
    bool operator==(const AuthoredRationale&) const = default;
};

enum class AnnotationKind { gold_correction, preference, authored_rationale };

struct AnnotationEvent {
    std::string id;
    std::string question_id;
    // answer id for gold corrections and authored rationales, record id for
    // preferences
    std::string target;
    std::variant<GoldCorrection, PreferenceMark, AuthoredRationale> payload;
    std::string author;
    Timestamp timestamp{};

    AnnotationKind kind() const { return static_cast<AnnotationKind>(payload.index()); }
    bool operator==(const AnnotationEvent&) const = default;
};

enum class ViolationCode {
    missing_prompt_text,
    missing_key_elements,
    empty_key_element,
    empty_rubric_description,
    negative_points,
    negative_max_mark,
    rubric_exceeds_max_mark,
    duplicate_id,
    empty_text,
    gold_out_of_range,
    wrong_question,
};

struct Violation {
    ViolationCode code;
    // index into the validated list, when the violation concerns one element
    std::optional<std::size_t> index;
    std::string detail;

    bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate_question(const Question& question);

struct AnswerBatchValidation {
    std::vector<Violation> violations;
    // indices of answers without violations, in input order
    std::vector<std::size_t> accepted;

    bool ok() const { return violations.empty(); }
};

// Flags duplicate ids (on the later occurrence), blank texts and out-of-range
// gold marks.
AnswerBatchValidation validate_answer_batch(const Question& question,
                                            std::span<const StudentAnswer> answers);

enum class Role { system, user, assistant };

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct StoredMessage {
    Role role = Role::user;
    std::string content;
    Timestamp timestamp{};

    bool operator==(const StoredMessage&) const = default;
};

struct ImportedContext {
    std::string question_id;
    std::vector<std::string> record_ids;

    bool operator==(const ImportedContext&) const = default;
};

struct ChatSession {
    std::string id;
    std::string user_id;
    std::string provider_id;
    std::optional<ImportedContext> context;
    std::vector<StoredMessage> messages;
    // set while a turn is in flight; at most one turn per session
    bool busy = false;
    // bumped by the store on every update (optimistic concurrency)
    std::int64_t version = 0;
    Timestamp created_at{};

    bool operator==(const ChatSession&) const = default;
};

enum class UserRole { educator, researcher, admin };

struct UserProfile {
    std::string id;
    std::string display_name;
    UserRole role = UserRole::educator;
    // SHA-256 of the bearer token; never leaves the store through the API
    std::string credential_hash;
    Timestamp created_at{};

    bool operator==(const UserProfile&) const = default;
};

std::string_view to_string(RecordStatus status);
std::string_view to_string(RecordOrigin origin);
std::string_view to_string(JobState state);
std::string_view to_string(PreferenceFlag flag);
std::string_view to_string(AnnotationKind kind);
std::string_view to_string(ViolationCode code);

std::string_view to_string(Role role);
std::string_view to_string(UserRole role);
std::optional<Role> parse_role(std::string_view text);
std::optional<UserRole> parse_user_role(std::string_view text);
std::optional<RecordStatus> parse_record_status(std::string_view text);
std::optional<RecordOrigin> parse_record_origin(std::string_view text);
std::optional<JobState> parse_job_state(std::string_view text);
std::optional<PreferenceFlag> parse_preference_flag(std::string_view text);

} // namespace gradelens
