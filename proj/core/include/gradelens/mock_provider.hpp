#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gradelens/gateway.hpp"
#include "gradelens/model.hpp"

namespace gradelens {

struct MockScore {
    int mark = 0;
    std::vector<std::size_t> matched;   // 1-based key element numbers
    std::vector<std::size_t> unmatched;
};

// A key element is matched when at least half of its content words
// (lowercased, punctuation-stripped, length >= 4) occur among the answer's
// words. Elements with no content words never match. The mark is the
// matched count clamped to max_mark.
MockScore mock_score(const Question& question, std::string_view answer_text);

std::string mock_rationale(const Question& question, const MockScore& score);

// The mock provider's reply to an assessment prompt: the JSON object the
// prompt asks for.
std::string mock_assess(const Question& question, std::string_view answer_text);

// Deterministic stand-in for a language model. Dispatches on the last user
// message: assessment prompts are scored with mock_assess, tagging prompts get
// a segments document, anything else gets a chat reply. Throws
// Error(provider_failed) for an assessment or tagging prompt it cannot read.
std::string mock_respond(std::span<const ChatMessage> messages);

struct ParsedAssessmentPrompt {
    Question question;
    std::string answer_text;
};

// Reads a prompt rendered from the default assessment template.
ParsedAssessmentPrompt parse_assessment_prompt(std::string_view prompt);

} // namespace gradelens
