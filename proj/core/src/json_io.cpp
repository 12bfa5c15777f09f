#include "gradelens/json_io.hpp"

#include <charconv>
#include <limits>

#include "gradelens/error.hpp"
#include "gradelens/text.hpp"

namespace gradelens {

namespace {

[[noreturn]] void bad_field(std::string_view name, std::string_view why) {
    fail(ErrorCode::bad_request, "field '" + std::string(name) + "' " + std::string(why));
}

template <typename Enum>
Enum read_enum(const Json& j, std::string_view name,
               std::optional<Enum> (*parse)(std::string_view)) {
    auto text = read_string(j, name);
    auto value = parse(text);
    if (!value) bad_field(name, "has unknown value '" + text + "'");
    return *value;
}

std::vector<std::string> read_string_list(const Json& j, std::string_view name) {
    const auto& field = require_field(j, name);
    if (!field.is_array()) bad_field(name, "must be an array of strings");
    std::vector<std::string> out;
    for (const auto& item : field) {
        if (!item.is_string()) bad_field(name, "must be an array of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

} // namespace

const Json& require_field(const Json& object, std::string_view name) {
    if (!object.is_object()) fail(ErrorCode::bad_request, "expected a JSON object");
    auto it = object.find(name);
    if (it == object.end()) bad_field(name, "is required");
    return *it;
}

std::string read_string(const Json& object, std::string_view name) {
    const auto& field = require_field(object, name);
    if (!field.is_string()) bad_field(name, "must be a string");
    return field.get<std::string>();
}

std::optional<std::string> read_optional_string(const Json& object, std::string_view name) {
    if (!object.is_object()) fail(ErrorCode::bad_request, "expected a JSON object");
    auto it = object.find(name);
    if (it == object.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) bad_field(name, "must be a string");
    return it->get<std::string>();
}

int read_int(const Json& object, std::string_view name) {
    return parse_integer_mark(require_field(object, name), name);
}

std::optional<int> read_optional_int(const Json& object, std::string_view name) {
    if (!object.is_object()) fail(ErrorCode::bad_request, "expected a JSON object");
    auto it = object.find(name);
    if (it == object.end() || it->is_null()) return std::nullopt;
    return parse_integer_mark(*it, name);
}

std::optional<int> parse_integer_text(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

int parse_integer_mark(const Json& value, std::string_view field) {
    if (value.is_number_integer()) {
        const auto wide = value.get<std::int64_t>();
        if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
            bad_field(field, "is out of integer range");
        }
        return static_cast<int>(wide);
    }
    if (value.is_number_float()) bad_field(field, "must be an integer, not a fraction");
    bad_field(field, "must be an integer");
}

Json timestamp_to_json(Timestamp t) { return t.time_since_epoch().count(); }

Timestamp timestamp_from_json(const Json& j) {
    if (!j.is_number_integer()) fail(ErrorCode::bad_request, "timestamp must be an integer");
    return Timestamp(std::chrono::milliseconds(j.get<std::int64_t>()));
}

void to_json(Json& j, const RubricItem& item) {
    j = Json{{"points", item.points}, {"description", item.description}};
}

void from_json(const Json& j, RubricItem& item) {
    item.points = read_int(j, "points");
    item.description = read_string(j, "description");
}

void to_json(Json& j, const Question& q) {
    j = Json{{"id", q.id},
             {"prompt_text", q.prompt_text},
             {"key_elements", q.key_elements},
             {"rubric", q.rubric},
             {"max_mark", q.max_mark}};
}

void from_json(const Json& j, Question& q) {
    q.id = read_optional_string(j, "id").value_or("");
    q.prompt_text = read_string(j, "prompt_text");
    q.key_elements = read_string_list(j, "key_elements");
    const auto& rubric = require_field(j, "rubric");
    if (!rubric.is_array()) bad_field("rubric", "must be an array");
    q.rubric.clear();
    for (const auto& item : rubric) q.rubric.push_back(item.get<RubricItem>());
    q.max_mark = read_int(j, "max_mark");
}

void to_json(Json& j, const StudentAnswer& a) {
    j = Json{{"id", a.id}, {"question_id", a.question_id}, {"text", a.text}};
    j["gold_mark"] = a.gold_mark ? Json(*a.gold_mark) : Json(nullptr);
}

void from_json(const Json& j, StudentAnswer& a) {
    if (j.is_object() && j.contains("answer_id")) {
        a.id = read_string(j, "answer_id");
    } else {
        a.id = read_string(j, "id");
    }
    a.question_id = read_optional_string(j, "question_id").value_or("");
    if (j.contains("answer_text")) {
        a.text = read_string(j, "answer_text");
    } else {
        a.text = read_string(j, "text");
    }
    a.gold_mark = read_optional_int(j, "gold_mark");
}

void to_json(Json& j, const AssessmentRecord& r) {
    j = Json{{"id", r.id},
             {"job_id", r.job_id},
             {"question_id", r.question_id},
             {"answer_id", r.answer_id},
             {"provider_id", r.provider_id},
             {"status", to_string(r.status)},
             {"origin", to_string(r.origin)},
             {"created_at", timestamp_to_json(r.created_at)}};
    j["mark"] = r.mark ? Json(*r.mark) : Json(nullptr);
    j["rationale"] = r.rationale ? Json(*r.rationale) : Json(nullptr);
    j["raw_output"] = r.raw_output ? Json(*r.raw_output) : Json(nullptr);
    j["failure_reason"] = r.failure_reason ? Json(*r.failure_reason) : Json(nullptr);
    j["finished_at"] = r.finished_at ? timestamp_to_json(*r.finished_at) : Json(nullptr);
}

void from_json(const Json& j, AssessmentRecord& r) {
    r.id = read_string(j, "id");
    r.job_id = read_string(j, "job_id");
    r.question_id = read_string(j, "question_id");
    r.answer_id = read_string(j, "answer_id");
    r.provider_id = read_string(j, "provider_id");
    r.status = read_enum<RecordStatus>(j, "status", parse_record_status);
    r.origin = read_enum<RecordOrigin>(j, "origin", parse_record_origin);
    r.mark = read_optional_int(j, "mark");
    r.rationale = read_optional_string(j, "rationale");
    r.raw_output = read_optional_string(j, "raw_output");
    r.failure_reason = read_optional_string(j, "failure_reason");
    r.created_at = timestamp_from_json(require_field(j, "created_at"));
    if (j.contains("finished_at") && !j["finished_at"].is_null()) {
        r.finished_at = timestamp_from_json(j["finished_at"]);
    } else {
        r.finished_at.reset();
    }
}

void to_json(Json& j, const BatchJob& job) {
    j = Json{{"id", job.id},
             {"question_id", job.question_id},
             {"answer_ids", job.answer_ids},
             {"provider_ids", job.provider_ids},
             {"state", to_string(job.state)},
             {"origin", to_string(job.origin)},
             {"prompt_suffix", job.prompt_suffix},
             {"created_at", timestamp_to_json(job.created_at)}};
}

void from_json(const Json& j, BatchJob& job) {
    job.id = read_string(j, "id");
    job.question_id = read_string(j, "question_id");
    job.answer_ids = read_string_list(j, "answer_ids");
    job.provider_ids = read_string_list(j, "provider_ids");
    job.state = read_enum<JobState>(j, "state", parse_job_state);
    job.origin = read_enum<RecordOrigin>(j, "origin", parse_record_origin);
    job.prompt_suffix = read_optional_string(j, "prompt_suffix").value_or("");
    job.created_at = timestamp_from_json(require_field(j, "created_at"));
}

void to_json(Json& j, const AnnotationEvent& e) {
    j = Json{{"id", e.id},
             {"kind", to_string(e.kind())},
             {"question_id", e.question_id},
             {"target", e.target},
             {"author", e.author},
             {"timestamp", timestamp_to_json(e.timestamp)}};
    std::visit(
        [&j](const auto& payload) {
            using T = std::decay_t<decltype(payload)>;
            if constexpr (std::is_same_v<T, GoldCorrection>) {
                j["mark"] = payload.mark;
            } else if constexpr (std::is_same_v<T, PreferenceMark>) {
                j["flag"] = to_string(payload.flag);
            } else {
                j["mark"] = payload.mark;
                j["rationale"] = payload.text;
                j["record_id"] = payload.record_id;
            }
        },
        e.payload);
}

void from_json(const Json& j, AnnotationEvent& e) {
    e.id = read_string(j, "id");
    e.question_id = read_string(j, "question_id");
    e.target = read_string(j, "target");
    e.author = read_string(j, "author");
    e.timestamp = timestamp_from_json(require_field(j, "timestamp"));
    const auto kind = read_string(j, "kind");
    if (kind == "gold_correction") {
        e.payload = GoldCorrection{read_int(j, "mark")};
    } else if (kind == "preference") {
        e.payload = PreferenceMark{read_enum<PreferenceFlag>(j, "flag", parse_preference_flag)};
    } else if (kind == "authored_rationale") {
        e.payload = AuthoredRationale{read_int(j, "mark"), read_string(j, "rationale"),
                                      read_optional_string(j, "record_id").value_or("")};
    } else {
        bad_field("kind", "has unknown value '" + kind + "'");
    }
}

void to_json(Json& j, const Violation& v) {
    j = Json{{"code", to_string(v.code)}, {"detail", v.detail}};
    j["index"] = v.index ? Json(*v.index) : Json(nullptr);
}

void to_json(Json& j, const StoredMessage& m) {
    j = Json{{"role", to_string(m.role)},
             {"content", m.content},
             {"timestamp", timestamp_to_json(m.timestamp)}};
}

void from_json(const Json& j, StoredMessage& m) {
    m.role = read_enum<Role>(j, "role", parse_role);
    m.content = read_string(j, "content");
    m.timestamp = timestamp_from_json(require_field(j, "timestamp"));
}

void to_json(Json& j, const ImportedContext& c) {
    j = Json{{"question_id", c.question_id}, {"record_ids", c.record_ids}};
}

void from_json(const Json& j, ImportedContext& c) {
    c.question_id = read_string(j, "question_id");
    c.record_ids = read_string_list(j, "record_ids");
}

void to_json(Json& j, const ChatSession& s) {
    j = Json{{"id", s.id},
             {"user_id", s.user_id},
             {"provider_id", s.provider_id},
             {"messages", s.messages},
             {"busy", s.busy},
             {"created_at", timestamp_to_json(s.created_at)}};
    j["context"] = s.context ? Json(*s.context) : Json(nullptr);
}

void from_json(const Json& j, ChatSession& s) {
    s.id = read_string(j, "id");
    s.user_id = read_string(j, "user_id");
    s.provider_id = read_string(j, "provider_id");
    const auto& messages = require_field(j, "messages");
    if (!messages.is_array()) bad_field("messages", "must be an array");
    s.messages.clear();
    for (const auto& m : messages) s.messages.push_back(m.get<StoredMessage>());
    s.busy = j.value("busy", false);
    s.created_at = timestamp_from_json(require_field(j, "created_at"));
    if (j.contains("context") && !j["context"].is_null()) {
        s.context = j["context"].get<ImportedContext>();
    } else {
        s.context.reset();
    }
}

void to_json(Json& j, const UserProfile& u) {
    j = Json{{"id", u.id},
             {"display_name", u.display_name},
             {"role", to_string(u.role)},
             {"created_at", timestamp_to_json(u.created_at)}};
}

void from_json(const Json& j, UserProfile& u) {
    u.id = read_string(j, "id");
    u.display_name = read_string(j, "display_name");
    u.role = read_enum<UserRole>(j, "role", parse_user_role);
    u.created_at = timestamp_from_json(require_field(j, "created_at"));
}

} // namespace gradelens
