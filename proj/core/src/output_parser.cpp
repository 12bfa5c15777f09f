#include "gradelens/output_parser.hpp"

#include <cctype>
#include <optional>

#include <nlohmann/json.hpp>

#include "gradelens/text.hpp"

namespace gradelens {

namespace {

struct JsonCandidate {
    bool found_object = false;
    std::optional<std::pair<long long, std::string>> fields;
};

// Returns mark and rationale when `j` is an object carrying both with the
// right types.
std::optional<std::pair<long long, std::string>> assessment_fields(const nlohmann::json& j) {
    if (!j.is_object()) return std::nullopt;
    auto mark = j.find("mark");
    auto rationale = j.find("rationale");
    if (mark == j.end() || rationale == j.end()) return std::nullopt;
    if (!mark->is_number_integer() || !rationale->is_string()) return std::nullopt;
    return std::make_pair(mark->get<long long>(), rationale->get<std::string>());
}

// End (exclusive) of the balanced {...} starting at `open`, honouring JSON
// string escapes. npos if unbalanced.
std::size_t balanced_end(std::string_view text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

JsonCandidate embedded_object(std::string_view text) {
    JsonCandidate result;
    for (auto open = text.find('{'); open != std::string_view::npos;
         open = text.find('{', open + 1)) {
        const auto end = balanced_end(text, open);
        if (end == std::string_view::npos) continue;
        const auto j = nlohmann::json::parse(text.substr(open, end - open), nullptr, false);
        if (j.is_discarded()) continue;
        result.found_object = true;
        if (auto fields = assessment_fields(j)) {
            result.fields = std::move(fields);
            return result;
        }
    }
    return result;
}

struct LineMark {
    long long mark;
    std::string rationale;
};

bool word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

std::optional<LineMark> line_mark(std::string_view text) {
    const auto lower = to_lower_ascii(text);
    for (auto at = lower.find("mark"); at != std::string::npos; at = lower.find("mark", at + 1)) {
        if (at > 0 && word_char(lower[at - 1])) continue;
        std::size_t i = at + 4;
        while (i < lower.size() && (lower[i] == ' ' || lower[i] == '\t')) ++i;
        if (i >= lower.size() || lower[i] != ':') continue;
        ++i;
        while (i < lower.size() && (lower[i] == ' ' || lower[i] == '\t')) ++i;
        const auto number_start = i;
        if (i < lower.size() && lower[i] == '-') ++i;
        const auto digits_start = i;
        while (i < lower.size() && std::isdigit(static_cast<unsigned char>(lower[i]))) ++i;
        if (i == digits_start || i - digits_start > 9) continue;
        // reject fractions like "1.5" and glued words like "2nd"
        if (i < lower.size() &&
            (word_char(lower[i]) ||
             (lower[i] == '.' && i + 1 < lower.size() &&
              std::isdigit(static_cast<unsigned char>(lower[i + 1]))))) {
            continue;
        }
        LineMark found;
        found.mark = std::stoll(std::string(lower.substr(number_start, i - number_start)));
        std::string rest(text.substr(0, at));
        rest += text.substr(i);
        found.rationale = std::string(trim(rest));
        return found;
    }
    return std::nullopt;
}

ParseOutcome finish(long long mark, std::string rationale, int max_mark, int stage) {
    if (mark < 0 || mark > max_mark) return ParseFailure::mark_out_of_range;
    return ParsedAssessment{static_cast<int>(mark), std::move(rationale), stage};
}

} // namespace

std::string_view to_string(ParseFailure failure) {
    switch (failure) {
    case ParseFailure::no_mark_found: return "no_mark_found";
    case ParseFailure::mark_out_of_range: return "mark_out_of_range";
    case ParseFailure::malformed_json_and_no_fallback: return "malformed_json_and_no_fallback";
    }
    return "no_mark_found";
}

ParseOutcome parse_model_output(std::string_view raw, int max_mark) {
    const auto body = trim(raw);

    const auto whole = nlohmann::json::parse(body, nullptr, false);
    if (!whole.is_discarded()) {
        if (auto fields = assessment_fields(whole)) {
            return finish(fields->first, std::move(fields->second), max_mark, 1);
        }
    }

    const auto embedded = embedded_object(body);
    if (embedded.fields) {
        return finish(embedded.fields->first, embedded.fields->second, max_mark, 2);
    }

    if (auto fallback = line_mark(body)) {
        return finish(fallback->mark, std::move(fallback->rationale), max_mark, 3);
    }

    const bool looked_like_json = body.find('{') != std::string_view::npos;
    return looked_like_json ? ParseFailure::malformed_json_and_no_fallback
                            : ParseFailure::no_mark_found;
}

} // namespace gradelens
