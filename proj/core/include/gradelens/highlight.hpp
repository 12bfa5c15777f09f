#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradelens/gateway.hpp"
#include "gradelens/model.hpp"
#include "gradelens/prompt.hpp"
#include "gradelens/store.hpp"

namespace gradelens {

struct TaggedSegment {
    std::string text;
    std::string label;

    bool operator==(const TaggedSegment&) const = default;
};

// [start, end) in code points of the original text.
struct HighlightSpan {
    std::size_t start = 0;
    std::size_t end = 0;
    std::string label;

    bool operator==(const HighlightSpan&) const = default;
};

struct SpanResolution {
    std::vector<HighlightSpan> spans;
    std::vector<TaggedSegment> unresolved;
};

// Lowercase (ASCII), collapse whitespace runs to one space, trim.
std::string normalize_excerpt(std::string_view text);

// Greedy forward matching: each segment is matched at the earliest position
// at or after the end of the previous match. Unmatched segments are reported,
// never guessed.
SpanResolution resolve_spans(std::string_view source, std::span<const TaggedSegment> segments);

// Code-point slice of `source`.
std::string slice_code_points(std::string_view source, std::size_t start, std::size_t end);

// Reads {"segments": [{"text", "label"}]}. Segments labelled "none", labelled
// outside the mode's label set or with blank text are dropped. Throws
// Error(tagging_parse_failed) when the document has the wrong shape.
std::vector<TaggedSegment> parse_tagging_response(std::string_view raw, TaggingMode mode,
                                                  const Question& question);

std::vector<TaggedSegment> request_tags(ModelGateway& gateway, const PromptCompiler& compiler,
                                        std::string_view provider_id, TaggingMode mode,
                                        const Question& question, std::string_view source_text,
                                        const std::optional<std::string>& rationale);

struct HighlightResult {
    std::string record_id;
    TaggingMode mode = TaggingMode::key_elements;
    // the answer text (key_elements) or the rationale (rationale_aspects)
    std::string source_text;
    std::vector<HighlightSpan> spans;
    std::vector<TaggedSegment> unresolved;
};

nlohmann::json to_json_document(const HighlightResult& result);
HighlightResult highlight_from_json(const nlohmann::json& document);

// Tags completed records and caches the resolved spans per (record, mode).
class Highlighter {
public:
    Highlighter(Store& store, ModelGateway& gateway, const PromptCompiler& compiler,
                std::string tagging_provider);

    // Always calls the tagger and replaces the cached result. Throws
    // Error(record_not_found | record_not_completed | tagging_parse_failed)
    // and provider errors.
    HighlightResult compute(std::string_view record_id, TaggingMode mode);

    // Throws Error(record_not_found | highlight_not_found).
    HighlightResult cached(std::string_view record_id, TaggingMode mode) const;

    const std::string& tagging_provider() const { return tagging_provider_; }

private:
    Store& store_;
    ModelGateway& gateway_;
    const PromptCompiler& compiler_;
    std::string tagging_provider_;
};

} // namespace gradelens
