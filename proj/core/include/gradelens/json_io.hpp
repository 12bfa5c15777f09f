#pragma once

#include <nlohmann/json.hpp>

#include "gradelens/model.hpp"

// JSON mappings for the domain types. Readers are strict: a wrong type or a
// fractional mark raises Error(bad_request) naming the offending field.
namespace gradelens {

using Json = nlohmann::json;

void to_json(Json& j, const RubricItem& item);
void from_json(const Json& j, RubricItem& item);
void to_json(Json& j, const Question& question);
void from_json(const Json& j, Question& question);
void to_json(Json& j, const StudentAnswer& answer);
void from_json(const Json& j, StudentAnswer& answer);
void to_json(Json& j, const AssessmentRecord& record);
void from_json(const Json& j, AssessmentRecord& record);
void to_json(Json& j, const BatchJob& job);
void from_json(const Json& j, BatchJob& job);
void to_json(Json& j, const AnnotationEvent& event);
void from_json(const Json& j, AnnotationEvent& event);
void to_json(Json& j, const Violation& violation);
void to_json(Json& j, const StoredMessage& message);
void from_json(const Json& j, StoredMessage& message);
void to_json(Json& j, const ImportedContext& context);
void from_json(const Json& j, ImportedContext& context);
// The session version is kept by the store, not in the document.
void to_json(Json& j, const ChatSession& session);
void from_json(const Json& j, ChatSession& session);
// Never includes the credential hash.
void to_json(Json& j, const UserProfile& user);
void from_json(const Json& j, UserProfile& user);

Json timestamp_to_json(Timestamp t);
Timestamp timestamp_from_json(const Json& j);

// Field readers used by request handlers and file loaders.
const Json& require_field(const Json& object, std::string_view name);
std::string read_string(const Json& object, std::string_view name);
std::optional<std::string> read_optional_string(const Json& object, std::string_view name);
int read_int(const Json& object, std::string_view name);
std::optional<int> read_optional_int(const Json& object, std::string_view name);

// Parses a mark written as a JSON integer, or as a decimal integer string in
// text formats. Fractional values are rejected.
int parse_integer_mark(const Json& value, std::string_view field);
std::optional<int> parse_integer_text(std::string_view text);

} // namespace gradelens
