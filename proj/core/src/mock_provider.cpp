#include "gradelens/mock_provider.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "gradelens/error.hpp"
#include "gradelens/json_io.hpp"
#include "gradelens/prompt.hpp"
#include "gradelens/text.hpp"

namespace gradelens {

namespace {

std::string join_numbers(const std::vector<std::size_t>& values) {
    if (values.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) out += ", ";
        out += std::to_string(values[i]);
    }
    return out;
}

[[noreturn]] void malformed(std::string_view what) {
    fail(ErrorCode::provider_failed, "mock provider: malformed prompt (" + std::string(what) + ")");
}

// Text between `heading` and the next blank-line-separated `next` heading.
// An empty `next` takes the rest of the prompt.
std::string_view section(std::string_view prompt, std::string_view heading, std::string_view next,
                         std::size_t from = 0) {
    auto start = prompt.find(heading, from);
    while (start != std::string_view::npos && start > 0 && prompt[start - 1] != '\n') {
        start = prompt.find(heading, start + 1);
    }
    if (start == std::string_view::npos) malformed(std::string("missing ") + std::string(heading));
    start += heading.size();
    if (next.empty()) return prompt.substr(start);
    const std::string terminator = "\n\n" + std::string(next);
    // the terminating heading may directly follow an empty section
    if (prompt.substr(start).starts_with(terminator.substr(1))) return prompt.substr(start, 0);
    const auto end = prompt.find(terminator, start);
    if (end == std::string_view::npos) malformed(std::string("missing ") + std::string(next));
    return prompt.substr(start, end - start);
}

std::vector<std::string> parse_key_elements(std::string_view block) {
    std::vector<std::string> elements;
    std::size_t pos = 0;
    while (pos <= block.size()) {
        auto eol = block.find('\n', pos);
        if (eol == std::string_view::npos) eol = block.size();
        const auto line = block.substr(pos, eol - pos);
        std::size_t digits = 0;
        while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) {
            ++digits;
        }
        const bool numbered = digits > 0 && line.substr(digits).starts_with(". ");
        if (numbered &&
            std::stoul(std::string(line.substr(0, digits))) == elements.size() + 1) {
            elements.emplace_back(line.substr(digits + 2));
        } else if (!elements.empty()) {
            elements.back() += '\n';
            elements.back() += line;
        } else {
            malformed("key element list");
        }
        pos = eol + 1;
    }
    return elements;
}

int parse_max_mark(std::string_view rubric_block) {
    const auto at = rubric_block.rfind(headings::maximum_mark);
    if (at == std::string_view::npos) malformed("maximum mark");
    auto rest = rubric_block.substr(at + headings::maximum_mark.size());
    rest = rest.substr(0, rest.find('\n'));
    const auto value = parse_integer_text(rest);
    if (!value) malformed("maximum mark");
    return *value;
}

std::string strip_edge_punct(std::string_view word) {
    auto punct = [](char c) {
        const auto u = static_cast<unsigned char>(c);
        return u < 0x80 && std::ispunct(u);
    };
    while (!word.empty() && punct(word.front())) word.remove_prefix(1);
    while (!word.empty() && punct(word.back())) word.remove_suffix(1);
    return std::string(word);
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        const bool boundary = (c == '.' || c == '!' || c == '?') &&
                              (i + 1 == text.size() ||
                               std::isspace(static_cast<unsigned char>(text[i + 1])));
        if (boundary || c == '\n') {
            auto sentence = trim(text.substr(start, i + 1 - start));
            if (!sentence.empty()) out.emplace_back(sentence);
            start = i + 1;
        }
    }
    auto tail = trim(text.substr(std::min(start, text.size())));
    if (!tail.empty()) out.emplace_back(tail);
    return out;
}

std::string rationale_label(std::string_view sentence) {
    const auto lower = to_lower_ascii(sentence);
    if (lower.starts_with("awarded ")) return "none";
    if (lower.ends_with(": none.")) return "none";
    if (lower.starts_with("missing key elements")) return "negative";
    if (lower.starts_with("addressed key elements")) return "positive";
    static constexpr std::string_view kNegativeCues[] = {"not ", "n't", "missing", "lacks",
                                                         "fails", "incorrect", "no "};
    for (auto cue : kNegativeCues) {
        if (lower.find(cue) != std::string::npos) return "negative";
    }
    return "positive";
}

std::string mock_tag(std::string_view prompt) {
    auto mode_line = section(prompt, headings::tagging_mode, "");
    mode_line = mode_line.substr(0, mode_line.find('\n'));
    const auto mode = parse_tagging_mode(trim(mode_line));
    if (!mode) malformed("tagging mode");

    nlohmann::ordered_json segments = nlohmann::ordered_json::array();
    auto add = [&](std::string text, std::string label) {
        nlohmann::ordered_json seg;
        seg["text"] = std::move(text);
        seg["label"] = std::move(label);
        segments.push_back(std::move(seg));
    };

    if (*mode == TaggingMode::key_elements) {
        const auto elements =
            parse_key_elements(section(prompt, headings::key_elements, headings::student_answer));
        const auto answer = section(prompt, headings::student_answer, headings::rationale);
        std::vector<std::unordered_set<std::string>> words;
        for (const auto& e : elements) {
            auto cw = content_words(e);
            words.emplace_back(cw.begin(), cw.end());
        }
        for (auto token : split_whitespace(answer)) {
            const auto normalized = normalize_word(token);
            const auto excerpt = strip_edge_punct(token);
            if (excerpt.empty()) continue;
            for (std::size_t k = 0; k < words.size(); ++k) {
                if (words[k].contains(normalized)) {
                    add(excerpt, "element_" + std::to_string(k + 1));
                    break;
                }
            }
        }
    } else {
        const auto rationale = section(prompt, headings::rationale, headings::instructions);
        for (auto& sentence : split_sentences(rationale)) {
            auto label = rationale_label(sentence);
            if (label != "none") add(std::move(sentence), std::move(label));
        }
    }
    nlohmann::ordered_json out;
    out["segments"] = std::move(segments);
    return out.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string mock_chat_reply(std::span<const ChatMessage> messages) {
    std::size_t user_turns = 0;
    std::string_view last;
    for (const auto& m : messages) {
        if (m.role == Role::user) {
            ++user_turns;
            last = m.content;
        }
    }
    const bool has_context = !messages.empty() && messages.front().role == Role::system;
    std::string reply = "Turn " + std::to_string(user_turns) + ". ";
    reply += has_context ? "Considering the imported assessments, " : "Without imported context, ";
    std::string quoted(last.substr(0, 200));
    reply += "you asked: \"" + quoted + "\". The recorded marks follow the rubric as written.";
    return reply;
}

} // namespace

MockScore mock_score(const Question& question, std::string_view answer_text) {
    std::unordered_set<std::string> answer_words;
    for (auto token : split_whitespace(answer_text)) answer_words.insert(normalize_word(token));

    MockScore score;
    for (std::size_t i = 0; i < question.key_elements.size(); ++i) {
        const auto words = content_words(question.key_elements[i]);
        std::size_t hits = 0;
        for (const auto& w : words) hits += answer_words.contains(w) ? 1 : 0;
        if (!words.empty() && 2 * hits >= words.size()) {
            score.matched.push_back(i + 1);
        } else {
            score.unmatched.push_back(i + 1);
        }
    }
    const int matched = static_cast<int>(score.matched.size());
    score.mark = std::max(0, std::min(question.max_mark, matched));
    return score;
}

std::string mock_rationale(const Question& question, const MockScore& score) {
    return "Awarded " + std::to_string(score.mark) + " of " + std::to_string(question.max_mark) +
           " marks. Addressed key elements: " + join_numbers(score.matched) +
           ". Missing key elements: " + join_numbers(score.unmatched) + ".";
}

std::string mock_assess(const Question& question, std::string_view answer_text) {
    const auto score = mock_score(question, answer_text);
    return format_assessment_output(score.mark, mock_rationale(question, score));
}

ParsedAssessmentPrompt parse_assessment_prompt(std::string_view prompt) {
    ParsedAssessmentPrompt parsed;
    parsed.question.prompt_text =
        std::string(section(prompt, headings::question, headings::key_elements));
    parsed.question.key_elements =
        parse_key_elements(section(prompt, headings::key_elements, headings::rubric));
    parsed.question.max_mark =
        parse_max_mark(section(prompt, headings::rubric, headings::student_answer));
    parsed.answer_text =
        std::string(section(prompt, headings::student_answer, headings::output_format));
    return parsed;
}

std::string mock_respond(std::span<const ChatMessage> messages) {
    const ChatMessage* last_user = nullptr;
    for (const auto& m : messages) {
        if (m.role == Role::user) last_user = &m;
    }
    if (last_user == nullptr) fail(ErrorCode::provider_failed, "mock provider: no user message");
    const std::string_view prompt = last_user->content;

    const bool tagging = prompt.find(std::string("\n") + std::string(headings::tagging_mode)) !=
                         std::string_view::npos;
    if (tagging) return mock_tag(prompt);

    const bool assessment = prompt.find(headings::output_format) != std::string_view::npos &&
                            prompt.find(headings::rubric) != std::string_view::npos &&
                            prompt.find(headings::student_answer) != std::string_view::npos;
    if (assessment && messages.size() == 1) {
        const auto parsed = parse_assessment_prompt(prompt);
        return mock_assess(parsed.question, parsed.answer_text);
    }
    return mock_chat_reply(messages);
}

} // namespace gradelens
