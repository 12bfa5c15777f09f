#include "gradelens/highlight.hpp"

#include <algorithm>
#include <unordered_set>

#include "gradelens/error.hpp"
#include "gradelens/json_io.hpp"
#include "gradelens/text.hpp"

namespace gradelens {

namespace {

char32_t fold(char32_t c) { return (c >= U'A' && c <= U'Z') ? c + (U'a' - U'A') : c; }

// Normalized code points plus, for each, the original [start, end) it came
// from. A collapsed whitespace run maps to the whole run.
struct Folded {
    std::u32string text;
    std::vector<std::size_t> start;
    std::vector<std::size_t> end;
};

Folded fold_text(std::u32string_view source) {
    Folded out;
    out.text.reserve(source.size());
    for (std::size_t i = 0; i < source.size();) {
        if (is_space(source[i])) {
            std::size_t j = i;
            while (j < source.size() && is_space(source[j])) ++j;
            out.text.push_back(U' ');
            out.start.push_back(i);
            out.end.push_back(j);
            i = j;
        } else {
            out.text.push_back(fold(source[i]));
            out.start.push_back(i);
            out.end.push_back(i + 1);
            ++i;
        }
    }
    return out;
}

std::u32string normalize_u32(std::u32string_view text) {
    std::u32string out;
    for (char32_t c : text) {
        if (is_space(c)) {
            if (!out.empty() && out.back() != U' ') out.push_back(U' ');
        } else {
            out.push_back(fold(c));
        }
    }
    if (!out.empty() && out.back() == U' ') out.pop_back();
    return out;
}

[[noreturn]] void tagging_failure(std::string_view why) {
    fail(ErrorCode::tagging_parse_failed, "tagging response " + std::string(why));
}

nlohmann::json parse_document(std::string_view raw) {
    auto doc = nlohmann::json::parse(raw, nullptr, false);
    if (!doc.is_discarded()) return doc;
    // tolerate prose or code fences around the object
    const auto open = raw.find('{');
    const auto close = raw.rfind('}');
    if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
        doc = nlohmann::json::parse(raw.substr(open, close - open + 1), nullptr, false);
        if (!doc.is_discarded()) return doc;
    }
    tagging_failure("is not JSON");
}

} // namespace

std::string normalize_excerpt(std::string_view text) {
    return encode_utf8(normalize_u32(decode_utf8(text)));
}

std::string slice_code_points(std::string_view source, std::size_t start, std::size_t end) {
    const auto points = decode_utf8(source);
    start = std::min(start, points.size());
    end = std::clamp(end, start, points.size());
    return encode_utf8(std::u32string_view(points).substr(start, end - start));
}

SpanResolution resolve_spans(std::string_view source, std::span<const TaggedSegment> segments) {
    SpanResolution out;
    if (segments.empty()) return out;
    const auto points = decode_utf8(source);
    const auto folded = fold_text(points);

    std::size_t cursor = 0;  // original offset
    std::size_t from = 0;    // first folded index starting at or after cursor
    for (const auto& segment : segments) {
        const auto needle = normalize_u32(decode_utf8(segment.text));
        const auto at = needle.empty() ? std::u32string::npos : folded.text.find(needle, from);
        if (at == std::u32string::npos) {
            out.unresolved.push_back(segment);
            continue;
        }
        const auto last = at + needle.size() - 1;
        out.spans.push_back({folded.start[at], folded.end[last], segment.label});
        cursor = folded.end[last];
        from = last + 1;
        while (from < folded.start.size() && folded.start[from] < cursor) ++from;
    }
    return out;
}

std::vector<TaggedSegment> parse_tagging_response(std::string_view raw, TaggingMode mode,
                                                  const Question& question) {
    const auto doc = parse_document(raw);
    if (!doc.is_object()) tagging_failure("is not a JSON object");
    const auto it = doc.find("segments");
    if (it == doc.end() || !it->is_array()) tagging_failure("has no \"segments\" array");

    const auto labels = tagging_labels(mode, question);
    const std::unordered_set<std::string> allowed(labels.begin(), labels.end());
    std::vector<TaggedSegment> out;
    for (const auto& item : *it) {
        if (!item.is_object()) tagging_failure("has a segment that is not an object");
        const auto text = item.find("text");
        const auto label = item.find("label");
        if (text == item.end() || !text->is_string() || label == item.end() ||
            !label->is_string()) {
            tagging_failure("has a segment without string \"text\" and \"label\"");
        }
        TaggedSegment segment{text->get<std::string>(), label->get<std::string>()};
        if (is_blank(segment.text) || !allowed.contains(segment.label)) continue;
        out.push_back(std::move(segment));
    }
    return out;
}

std::vector<TaggedSegment> request_tags(ModelGateway& gateway, const PromptCompiler& compiler,
                                        std::string_view provider_id, TaggingMode mode,
                                        const Question& question, std::string_view source_text,
                                        const std::optional<std::string>& rationale) {
    const auto prompt = compiler.compile_tagging_prompt(mode, question, source_text, rationale);
    const auto completion = gateway.generate(provider_id, prompt);
    return parse_tagging_response(completion.text, mode, question);
}

nlohmann::json to_json_document(const HighlightResult& result) {
    auto spans = nlohmann::json::array();
    for (const auto& s : result.spans) {
        spans.push_back({{"start", s.start}, {"end", s.end}, {"label", s.label}});
    }
    auto unresolved = nlohmann::json::array();
    for (const auto& u : result.unresolved) {
        unresolved.push_back({{"text", u.text}, {"label", u.label}});
    }
    return {{"record_id", result.record_id},
            {"mode", to_string(result.mode)},
            {"source_text", result.source_text},
            {"spans", std::move(spans)},
            {"unresolved", std::move(unresolved)}};
}

HighlightResult highlight_from_json(const nlohmann::json& document) {
    HighlightResult result;
    result.record_id = read_string(document, "record_id");
    const auto mode = parse_tagging_mode(read_string(document, "mode"));
    if (!mode) fail(ErrorCode::internal, "cached highlight has an unknown mode");
    result.mode = *mode;
    result.source_text = read_string(document, "source_text");
    for (const auto& s : require_field(document, "spans")) {
        result.spans.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(),
                                s.at("label").get<std::string>()});
    }
    for (const auto& u : require_field(document, "unresolved")) {
        result.unresolved.push_back({u.at("text").get<std::string>(), u.at("label").get<std::string>()});
    }
    return result;
}

Highlighter::Highlighter(Store& store, ModelGateway& gateway, const PromptCompiler& compiler,
                         std::string tagging_provider)
    : store_(store), gateway_(gateway), compiler_(compiler),
      tagging_provider_(std::move(tagging_provider)) {}

HighlightResult Highlighter::compute(std::string_view record_id, TaggingMode mode) {
    const auto record = store_.find_record(record_id);
    if (!record) fail(ErrorCode::record_not_found, "no record '" + std::string(record_id) + "'");
    if (record->status != RecordStatus::completed) {
        fail(ErrorCode::record_not_completed,
             "record '" + record->id + "' is " + std::string(to_string(record->status)));
    }
    const auto question = store_.find_question(record->question_id);
    const auto answer = store_.find_answer(record->answer_id);
    if (!question || !answer) fail(ErrorCode::internal, "record '" + record->id + "' is orphaned");

    HighlightResult result;
    result.record_id = record->id;
    result.mode = mode;
    std::optional<std::string> rationale;
    if (mode == TaggingMode::rationale_aspects) {
        rationale = record->rationale;
        result.source_text = record->rationale.value_or("");
    } else {
        result.source_text = answer->text;
    }
    const auto segments = request_tags(gateway_, compiler_, tagging_provider_, mode, *question,
                                       answer->text, rationale);
    auto resolution = resolve_spans(result.source_text, segments);
    result.spans = std::move(resolution.spans);
    result.unresolved = std::move(resolution.unresolved);
    store_.put_highlight(record->id, to_string(mode), to_json_document(result).dump());
    return result;
}

HighlightResult Highlighter::cached(std::string_view record_id, TaggingMode mode) const {
    if (!store_.find_record(record_id)) {
        fail(ErrorCode::record_not_found, "no record '" + std::string(record_id) + "'");
    }
    const auto document = store_.find_highlight(record_id, to_string(mode));
    if (!document) {
        fail(ErrorCode::highlight_not_found, "no " + std::string(to_string(mode)) +
                                                 " highlights for record '" +
                                                 std::string(record_id) + "'");
    }
    return highlight_from_json(nlohmann::json::parse(*document));
}

} // namespace gradelens
