#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gradelens/model.hpp"

namespace gradelens {

enum class Placeholder {
    prompt_text,
    key_elements,
    rubric,
    student_answer,
    rationale,
    mode,
    assessments,
};

inline constexpr std::size_t kPlaceholderCount = 7;

std::string_view to_string(Placeholder placeholder);
std::optional<Placeholder> parse_placeholder(std::string_view name);

class PlaceholderBindings {
public:
    PlaceholderBindings& bind(Placeholder placeholder, std::string value);
    const std::string* find(Placeholder placeholder) const;

private:
    std::array<std::optional<std::string>, kPlaceholderCount> values_;
};

// A template is literal text interleaved with {{placeholder}} slots. Leading
// lines starting with "#!" carry metadata ("#! version: 2") and are not
// rendered.
class PromptTemplate {
public:
    using Segment = std::variant<std::string, Placeholder>;

    // Throws Error(template_error) on an unknown or unterminated placeholder.
    static PromptTemplate parse(std::string name, std::string_view source);

    const std::string& name() const { return name_; }
    const std::string& version() const { return version_; }
    const std::vector<Segment>& segments() const { return segments_; }
    bool uses(Placeholder placeholder) const;

    // Single pass: substituted values are never re-scanned for placeholders.
    std::string render(const PlaceholderBindings& bindings) const;

private:
    std::string name_;
    std::string version_ = "1";
    std::vector<Segment> segments_;
};

struct TemplateSet {
    PromptTemplate assessment;
    PromptTemplate tagging;
    PromptTemplate chat_context;

    static TemplateSet defaults();
    // Reads assessment.txt, tagging.txt and chat_context.txt from `dir`.
    static TemplateSet load_directory(const std::filesystem::path& dir);
};

enum class TaggingMode { key_elements, rationale_aspects };

std::string_view to_string(TaggingMode mode);
std::optional<TaggingMode> parse_tagging_mode(std::string_view text);

// Labels a tagger may emit for `mode`, excluding "none".
std::vector<std::string> tagging_labels(TaggingMode mode, const Question& question);

// Canonical section headings of the default templates. The mock provider
// reads prompts back through these.
namespace headings {
inline constexpr std::string_view question = "Question:\n";
inline constexpr std::string_view key_elements = "Key answer elements:\n";
inline constexpr std::string_view rubric = "Marking rubric:\n";
inline constexpr std::string_view student_answer = "Student answer:\n";
inline constexpr std::string_view rationale = "Rationale:\n";
inline constexpr std::string_view instructions = "Instructions:\n";
inline constexpr std::string_view output_format = "Output format:\n";
inline constexpr std::string_view tagging_mode = "Tagging mode: ";
inline constexpr std::string_view maximum_mark = "Maximum mark: ";
inline constexpr std::string_view discussion = "Discussion with the reviewer:\n";
inline constexpr std::string_view no_prior_assessments = "No prior assessments.";
inline constexpr std::string_view not_applicable = "(not applicable)";
} // namespace headings

std::string render_key_elements(std::span<const std::string> key_elements);
std::string render_rubric(const Question& question);

// The JSON object the assessment prompt asks for. parse_model_output inverts it.
std::string format_assessment_output(int mark, std::string_view rationale);

class PromptCompiler {
public:
    PromptCompiler() : PromptCompiler(TemplateSet::defaults()) {}
    explicit PromptCompiler(TemplateSet templates) : templates_(std::move(templates)) {}

    // Precondition: the answer text is non-blank (rejected at ingestion).
    // Gold marks are never included.
    std::string compile_assessment_prompt(const Question& question,
                                          const StudentAnswer& answer) const;

    // key_elements mode tags `target_text` (the student answer);
    // rationale_aspects mode tags `rationale`, which must be present.
    std::string compile_tagging_prompt(TaggingMode mode, const Question& question,
                                       std::string_view target_text,
                                       const std::optional<std::string>& rationale) const;

    // Records are listed by creation time. `answers` supplies answer texts
    // for the records when available.
    std::string compile_chat_context(const Question& question,
                                     std::span<const AssessmentRecord> records,
                                     std::span<const StudentAnswer> answers = {}) const;

    const TemplateSet& templates() const { return templates_; }

private:
    TemplateSet templates_;
};

} // namespace gradelens
