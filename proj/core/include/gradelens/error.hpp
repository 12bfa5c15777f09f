#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gradelens {

// Every failure a module can report. The wire name of each code is its
// snake_case spelling; see to_string().
enum class ErrorCode {
    // validation
    bad_request,
    invalid_question,
    invalid_answers,
    invalid_config,
    invalid_tagging_request,
    unknown_provider,
    empty_batch,
    out_of_range,
    empty_rationale,
    empty_pair_set,
    single_class_range,
    template_error,
    // authentication
    unauthorized,
    // lookup
    question_not_found,
    answer_not_found,
    record_not_found,
    job_not_found,
    session_not_found,
    highlight_not_found,
    no_evaluable_records,
    // state conflicts
    job_already_running,
    record_not_completed,
    session_busy,
    no_imported_context,
    duplicate_id,
    // upstream model failures
    provider_failed,
    timeout,
    tagging_parse_failed,
    // everything else
    store_failure,
    internal,
};

inline constexpr ErrorCode kAllErrorCodes[] = {
    ErrorCode::bad_request,          ErrorCode::invalid_question,
    ErrorCode::invalid_answers,      ErrorCode::invalid_config,
    ErrorCode::invalid_tagging_request, ErrorCode::unknown_provider,
    ErrorCode::empty_batch,          ErrorCode::out_of_range,
    ErrorCode::empty_rationale,      ErrorCode::empty_pair_set,
    ErrorCode::single_class_range,   ErrorCode::template_error,
    ErrorCode::unauthorized,         ErrorCode::question_not_found,
    ErrorCode::answer_not_found,     ErrorCode::record_not_found,
    ErrorCode::job_not_found,        ErrorCode::session_not_found,
    ErrorCode::highlight_not_found,  ErrorCode::no_evaluable_records,
    ErrorCode::job_already_running,  ErrorCode::record_not_completed,
    ErrorCode::session_busy,         ErrorCode::no_imported_context,
    ErrorCode::duplicate_id,         ErrorCode::provider_failed,
    ErrorCode::timeout,              ErrorCode::tagging_parse_failed,
    ErrorCode::store_failure,        ErrorCode::internal,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, std::string message) {
    throw Error(code, std::move(message));
}

} // namespace gradelens
