#include "gradelens/model.hpp"

#include <algorithm>
#include <unordered_set>

#include "gradelens/error.hpp"
#include "gradelens/text.hpp"

namespace gradelens {

Timestamp now() {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(
        std::chrono::system_clock::now());
}

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::bad_request: return "bad_request";
    case ErrorCode::invalid_question: return "invalid_question";
    case ErrorCode::invalid_answers: return "invalid_answers";
    case ErrorCode::invalid_config: return "invalid_config";
    case ErrorCode::invalid_tagging_request: return "invalid_tagging_request";
    case ErrorCode::unknown_provider: return "unknown_provider";
    case ErrorCode::empty_batch: return "empty_batch";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::empty_rationale: return "empty_rationale";
    case ErrorCode::empty_pair_set: return "empty_pair_set";
    case ErrorCode::single_class_range: return "single_class_range";
    case ErrorCode::template_error: return "template_error";
    case ErrorCode::unauthorized: return "unauthorized";
    case ErrorCode::question_not_found: return "question_not_found";
    case ErrorCode::answer_not_found: return "answer_not_found";
    case ErrorCode::record_not_found: return "record_not_found";
    case ErrorCode::job_not_found: return "job_not_found";
    case ErrorCode::session_not_found: return "session_not_found";
    case ErrorCode::highlight_not_found: return "highlight_not_found";
    case ErrorCode::no_evaluable_records: return "no_evaluable_records";
    case ErrorCode::job_already_running: return "job_already_running";
    case ErrorCode::record_not_completed: return "record_not_completed";
    case ErrorCode::session_busy: return "session_busy";
    case ErrorCode::no_imported_context: return "no_imported_context";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::provider_failed: return "provider_failed";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::tagging_parse_failed: return "tagging_parse_failed";
    case ErrorCode::store_failure: return "store_failure";
    case ErrorCode::internal: return "internal";
    }
    return "internal";
}

bool is_terminal(RecordStatus status) {
    return status == RecordStatus::completed || status == RecordStatus::parse_failed ||
           status == RecordStatus::provider_failed;
}

bool AssessmentRecord::terminal() const { return is_terminal(status); }

bool is_valid_transition(RecordStatus from, RecordStatus to) {
    if (from == RecordStatus::pending) return to == RecordStatus::running;
    if (from == RecordStatus::running) return is_terminal(to);
    return false;
}

bool record_is_consistent(const AssessmentRecord& record) {
    const bool has_result = record.mark.has_value() && record.rationale.has_value();
    if (record.status == RecordStatus::completed) return has_result;
    return !record.mark.has_value();
}

std::vector<Violation> validate_question(const Question& question) {
    std::vector<Violation> out;
    if (is_blank(question.prompt_text)) {
        out.push_back({ViolationCode::missing_prompt_text, std::nullopt, "prompt_text is empty"});
    }
    if (question.key_elements.empty()) {
        out.push_back({ViolationCode::missing_key_elements, std::nullopt,
                       "at least one key answer element is required"});
    }
    for (std::size_t i = 0; i < question.key_elements.size(); ++i) {
        if (is_blank(question.key_elements[i])) {
            out.push_back({ViolationCode::empty_key_element, i, "key element is empty"});
        }
    }
    if (question.max_mark < 0) {
        out.push_back({ViolationCode::negative_max_mark, std::nullopt, "max_mark is negative"});
    }
    for (std::size_t i = 0; i < question.rubric.size(); ++i) {
        const auto& item = question.rubric[i];
        if (is_blank(item.description)) {
            out.push_back({ViolationCode::empty_rubric_description, i,
                           "rubric item description is empty"});
        }
        if (item.points < 0) {
            out.push_back({ViolationCode::negative_points, i, "rubric item points are negative"});
        }
        if (item.points > question.max_mark) {
            out.push_back({ViolationCode::rubric_exceeds_max_mark, i,
                           "rubric item awards " + std::to_string(item.points) +
                               " points but max_mark is " + std::to_string(question.max_mark)});
        }
    }
    return out;
}

AnswerBatchValidation validate_answer_batch(const Question& question,
                                            std::span<const StudentAnswer> answers) {
    AnswerBatchValidation result;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < answers.size(); ++i) {
        const auto& answer = answers[i];
        const auto before = result.violations.size();
        if (!seen.insert(answer.id).second) {
            result.violations.push_back(
                {ViolationCode::duplicate_id, i, "answer id '" + answer.id + "' repeats"});
        }
        if (!answer.question_id.empty() && answer.question_id != question.id) {
            result.violations.push_back({ViolationCode::wrong_question, i,
                                         "answer belongs to question '" + answer.question_id + "'"});
        }
        if (is_blank(answer.text)) {
            result.violations.push_back({ViolationCode::empty_text, i, "answer text is empty"});
        }
        if (answer.gold_mark && !question.mark_in_range(*answer.gold_mark)) {
            result.violations.push_back({ViolationCode::gold_out_of_range, i,
                                         "gold mark " + std::to_string(*answer.gold_mark) +
                                             " outside [0, " + std::to_string(question.max_mark) +
                                             "]"});
        }
        if (result.violations.size() == before) result.accepted.push_back(i);
    }
    return result;
}

std::string_view to_string(RecordStatus status) {
    switch (status) {
    case RecordStatus::pending: return "pending";
    case RecordStatus::running: return "running";
    case RecordStatus::completed: return "completed";
    case RecordStatus::parse_failed: return "parse_failed";
    case RecordStatus::provider_failed: return "provider_failed";
    }
    return "pending";
}

std::string_view to_string(RecordOrigin origin) {
    switch (origin) {
    case RecordOrigin::batch: return "batch";
    case RecordOrigin::chat: return "chat";
    case RecordOrigin::human: return "human";
    }
    return "batch";
}

std::string_view to_string(JobState state) {
    switch (state) {
    case JobState::created: return "created";
    case JobState::running: return "running";
    case JobState::terminal: return "terminal";
    }
    return "created";
}

std::string_view to_string(PreferenceFlag flag) {
    return flag == PreferenceFlag::preferred ? "preferred" : "not_preferred";
}

std::string_view to_string(AnnotationKind kind) {
    switch (kind) {
    case AnnotationKind::gold_correction: return "gold_correction";
    case AnnotationKind::preference: return "preference";
    case AnnotationKind::authored_rationale: return "authored_rationale";
    }
    return "gold_correction";
}

std::string_view to_string(Role role) {
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

std::string_view to_string(UserRole role) {
    switch (role) {
    case UserRole::educator: return "educator";
    case UserRole::researcher: return "researcher";
    case UserRole::admin: return "admin";
    }
    return "educator";
}

std::string_view to_string(ViolationCode code) {
    switch (code) {
    case ViolationCode::missing_prompt_text: return "missing_prompt_text";
    case ViolationCode::missing_key_elements: return "missing_key_elements";
    case ViolationCode::empty_key_element: return "empty_key_element";
    case ViolationCode::empty_rubric_description: return "empty_rubric_description";
    case ViolationCode::negative_points: return "negative_points";
    case ViolationCode::negative_max_mark: return "negative_max_mark";
    case ViolationCode::rubric_exceeds_max_mark: return "rubric_exceeds_max_mark";
    case ViolationCode::duplicate_id: return "duplicate_id";
    case ViolationCode::empty_text: return "empty_text";
    case ViolationCode::gold_out_of_range: return "gold_out_of_range";
    case ViolationCode::wrong_question: return "wrong_question";
    }
    return "missing_prompt_text";
}

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(std::string_view text, const Enum (&values)[N]) {
    for (auto value : values) {
        if (to_string(value) == text) return value;
    }
    return std::nullopt;
}

} // namespace

std::optional<RecordStatus> parse_record_status(std::string_view text) {
    static constexpr RecordStatus kValues[] = {RecordStatus::pending, RecordStatus::running,
                                               RecordStatus::completed, RecordStatus::parse_failed,
                                               RecordStatus::provider_failed};
    return parse_enum(text, kValues);
}

std::optional<RecordOrigin> parse_record_origin(std::string_view text) {
    static constexpr RecordOrigin kValues[] = {RecordOrigin::batch, RecordOrigin::chat,
                                               RecordOrigin::human};
    return parse_enum(text, kValues);
}

std::optional<JobState> parse_job_state(std::string_view text) {
    static constexpr JobState kValues[] = {JobState::created, JobState::running,
                                           JobState::terminal};
    return parse_enum(text, kValues);
}

std::optional<Role> parse_role(std::string_view text) {
    static constexpr Role kValues[] = {Role::system, Role::user, Role::assistant};
    return parse_enum(text, kValues);
}

std::optional<UserRole> parse_user_role(std::string_view text) {
    static constexpr UserRole kValues[] = {UserRole::educator, UserRole::researcher,
                                           UserRole::admin};
    return parse_enum(text, kValues);
}

std::optional<PreferenceFlag> parse_preference_flag(std::string_view text) {
    static constexpr PreferenceFlag kValues[] = {PreferenceFlag::preferred,
                                                 PreferenceFlag::not_preferred};
    return parse_enum(text, kValues);
}

} // namespace gradelens
