#pragma once

#include <string>
#include <string_view>
#include <variant>

namespace gradelens {

enum class ParseFailure { no_mark_found, mark_out_of_range, malformed_json_and_no_fallback };

std::string_view to_string(ParseFailure failure);

struct ParsedAssessment {
    int mark = 0;
    std::string rationale;
    // 1 = strict JSON, 2 = JSON object inside prose, 3 = "mark: N" line
    int stage = 1;

    bool operator==(const ParsedAssessment&) const = default;
};

using ParseOutcome = std::variant<ParsedAssessment, ParseFailure>;

// Extracts (mark, rationale) from raw model output. Tries, in order:
//   1. the whole text as a JSON object with integer "mark" and string
//      "rationale";
//   2. the first such JSON object embedded in surrounding prose;
//   3. the first line containing "mark: <integer>" (case-insensitive); the
//      rationale is the remaining text with that match removed.
// A mark outside [0, max_mark] is a failure, never clamped. JSON with a
// duplicated "mark" key keeps the last value; in free text the first
// "mark:" wins.
ParseOutcome parse_model_output(std::string_view raw, int max_mark);

} // namespace gradelens
