#include "gradelens/prompt.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "embedded_resources.hpp"
#include "gradelens/error.hpp"
#include "gradelens/text.hpp"

namespace gradelens {

namespace {

constexpr std::string_view kOpen = "{{";
constexpr std::string_view kClose = "}}";

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::template_error, "cannot read template " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

std::string_view to_string(Placeholder placeholder) {
    switch (placeholder) {
    case Placeholder::prompt_text: return "prompt_text";
    case Placeholder::key_elements: return "key_elements";
    case Placeholder::rubric: return "rubric";
    case Placeholder::student_answer: return "student_answer";
    case Placeholder::rationale: return "rationale";
    case Placeholder::mode: return "mode";
    case Placeholder::assessments: return "assessments";
    }
    return "prompt_text";
}

std::optional<Placeholder> parse_placeholder(std::string_view name) {
    for (std::size_t i = 0; i < kPlaceholderCount; ++i) {
        const auto p = static_cast<Placeholder>(i);
        if (to_string(p) == name) return p;
    }
    return std::nullopt;
}

PlaceholderBindings& PlaceholderBindings::bind(Placeholder placeholder, std::string value) {
    values_[static_cast<std::size_t>(placeholder)] = std::move(value);
    return *this;
}

const std::string* PlaceholderBindings::find(Placeholder placeholder) const {
    const auto& slot = values_[static_cast<std::size_t>(placeholder)];
    return slot ? &*slot : nullptr;
}

PromptTemplate PromptTemplate::parse(std::string name, std::string_view source) {
    PromptTemplate tpl;
    tpl.name_ = std::move(name);

    while (source.starts_with("#!")) {
        const auto eol = source.find('\n');
        auto line = trim(source.substr(2, eol == std::string_view::npos ? source.npos : eol - 2));
        if (line.starts_with("version:")) tpl.version_ = std::string(trim(line.substr(8)));
        source = eol == std::string_view::npos ? std::string_view{} : source.substr(eol + 1);
    }

    std::string literal;
    std::size_t pos = 0;
    while (pos < source.size()) {
        const auto open = source.find(kOpen, pos);
        if (open == std::string_view::npos) {
            literal.append(source.substr(pos));
            break;
        }
        literal.append(source.substr(pos, open - pos));
        const auto close = source.find(kClose, open + kOpen.size());
        if (close == std::string_view::npos) {
            fail(ErrorCode::template_error,
                 "template '" + tpl.name_ + "': unterminated placeholder");
        }
        const auto key = trim(source.substr(open + kOpen.size(), close - open - kOpen.size()));
        const auto placeholder = parse_placeholder(key);
        if (!placeholder) {
            fail(ErrorCode::template_error,
                 "template '" + tpl.name_ + "': unknown placeholder '" + std::string(key) + "'");
        }
        if (!literal.empty()) tpl.segments_.emplace_back(std::exchange(literal, {}));
        tpl.segments_.emplace_back(*placeholder);
        pos = close + kClose.size();
    }
    if (!literal.empty()) tpl.segments_.emplace_back(std::move(literal));
    return tpl;
}

bool PromptTemplate::uses(Placeholder placeholder) const {
    return std::any_of(segments_.begin(), segments_.end(), [&](const Segment& s) {
        const auto* p = std::get_if<Placeholder>(&s);
        return p != nullptr && *p == placeholder;
    });
}

std::string PromptTemplate::render(const PlaceholderBindings& bindings) const {
    std::string out;
    for (const auto& segment : segments_) {
        if (const auto* text = std::get_if<std::string>(&segment)) {
            out += *text;
            continue;
        }
        const auto placeholder = std::get<Placeholder>(segment);
        const auto* value = bindings.find(placeholder);
        if (value == nullptr) {
            fail(ErrorCode::template_error, "template '" + name_ + "': no binding for '" +
                                                std::string(to_string(placeholder)) + "'");
        }
        out += *value;
    }
    return out;
}

TemplateSet TemplateSet::defaults() {
    return TemplateSet{
        PromptTemplate::parse("assessment", embedded::assessment_template),
        PromptTemplate::parse("tagging", embedded::tagging_template),
        PromptTemplate::parse("chat_context", embedded::chat_context_template),
    };
}

TemplateSet TemplateSet::load_directory(const std::filesystem::path& dir) {
    return TemplateSet{
        PromptTemplate::parse("assessment", read_file(dir / "assessment.txt")),
        PromptTemplate::parse("tagging", read_file(dir / "tagging.txt")),
        PromptTemplate::parse("chat_context", read_file(dir / "chat_context.txt")),
    };
}

std::string_view to_string(TaggingMode mode) {
    return mode == TaggingMode::key_elements ? "key_elements" : "rationale_aspects";
}

std::optional<TaggingMode> parse_tagging_mode(std::string_view text) {
    if (text == "key_elements") return TaggingMode::key_elements;
    if (text == "rationale_aspects") return TaggingMode::rationale_aspects;
    return std::nullopt;
}

std::vector<std::string> tagging_labels(TaggingMode mode, const Question& question) {
    if (mode == TaggingMode::rationale_aspects) return {"positive", "negative"};
    std::vector<std::string> labels;
    for (std::size_t k = 1; k <= question.key_elements.size(); ++k) {
        labels.push_back("element_" + std::to_string(k));
    }
    return labels;
}

std::string render_key_elements(std::span<const std::string> key_elements) {
    std::string out;
    for (std::size_t i = 0; i < key_elements.size(); ++i) {
        if (i > 0) out += '\n';
        out += std::to_string(i + 1) + ". " + key_elements[i];
    }
    return out;
}

std::string render_rubric(const Question& question) {
    std::string out;
    for (const auto& item : question.rubric) {
        out += "- [" + std::to_string(item.points) + (item.points == 1 ? " point] " : " points] ") +
               item.description + '\n';
    }
    if (question.rubric.empty()) out += "(no rubric items)\n";
    out += std::string(headings::maximum_mark) + std::to_string(question.max_mark);
    return out;
}

std::string format_assessment_output(int mark, std::string_view rationale) {
    nlohmann::ordered_json j;
    j["mark"] = mark;
    j["rationale"] = std::string(rationale);
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string PromptCompiler::compile_assessment_prompt(const Question& question,
                                                      const StudentAnswer& answer) const {
    PlaceholderBindings bindings;
    bindings.bind(Placeholder::prompt_text, question.prompt_text)
        .bind(Placeholder::key_elements, render_key_elements(question.key_elements))
        .bind(Placeholder::rubric, render_rubric(question))
        .bind(Placeholder::student_answer, answer.text)
        .bind(Placeholder::rationale, std::string(headings::not_applicable))
        .bind(Placeholder::mode, "assessment")
        .bind(Placeholder::assessments, std::string(headings::not_applicable));
    return templates_.assessment.render(bindings);
}

std::string PromptCompiler::compile_tagging_prompt(
    TaggingMode mode, const Question& question, std::string_view target_text,
    const std::optional<std::string>& rationale) const {
    if (mode == TaggingMode::rationale_aspects && (!rationale || is_blank(*rationale))) {
        fail(ErrorCode::invalid_tagging_request, "rationale_aspects mode requires a rationale");
    }
    if (mode == TaggingMode::key_elements && is_blank(target_text)) {
        fail(ErrorCode::invalid_tagging_request, "key_elements mode requires the student answer");
    }

    auto labels = tagging_labels(mode, question);
    labels.emplace_back("none");
    std::string mode_text(to_string(mode));
    mode_text += "\nAllowed labels: ";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i > 0) mode_text += ", ";
        mode_text += labels[i];
    }

    PlaceholderBindings bindings;
    bindings.bind(Placeholder::prompt_text, question.prompt_text)
        .bind(Placeholder::key_elements, render_key_elements(question.key_elements))
        .bind(Placeholder::rubric, render_rubric(question))
        .bind(Placeholder::student_answer, std::string(target_text))
        .bind(Placeholder::rationale, mode == TaggingMode::rationale_aspects
                                          ? *rationale
                                          : std::string(headings::not_applicable))
        .bind(Placeholder::mode, std::move(mode_text))
        .bind(Placeholder::assessments, std::string(headings::not_applicable));
    return templates_.tagging.render(bindings);
}

std::string PromptCompiler::compile_chat_context(const Question& question,
                                                 std::span<const AssessmentRecord> records,
                                                 std::span<const StudentAnswer> answers) const {
    std::vector<const AssessmentRecord*> ordered;
    for (const auto& r : records) ordered.push_back(&r);
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        if (a->created_at != b->created_at) return a->created_at < b->created_at;
        return a->id < b->id;
    });

    std::string assessments;
    if (ordered.empty()) assessments = headings::no_prior_assessments;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const auto& r = *ordered[i];
        if (i > 0) assessments += "\n\n";
        assessments += "[" + std::to_string(i + 1) + "] Provider: " + r.provider_id + '\n';
        const auto answer = std::find_if(answers.begin(), answers.end(),
                                         [&](const StudentAnswer& a) { return a.id == r.answer_id; });
        if (answer != answers.end()) {
            assessments += "Student answer (" + r.answer_id + "): " + answer->text + '\n';
        } else {
            assessments += "Student answer: " + r.answer_id + '\n';
        }
        assessments += "Mark: " + (r.mark ? std::to_string(*r.mark) : std::string("none")) + '\n';
        assessments += "Rationale: " + r.rationale.value_or("(none)");
    }

    PlaceholderBindings bindings;
    bindings.bind(Placeholder::prompt_text, question.prompt_text)
        .bind(Placeholder::key_elements, render_key_elements(question.key_elements))
        .bind(Placeholder::rubric, render_rubric(question))
        .bind(Placeholder::student_answer, std::string(headings::not_applicable))
        .bind(Placeholder::rationale, std::string(headings::not_applicable))
        .bind(Placeholder::mode, "chat")
        .bind(Placeholder::assessments, std::move(assessments));
    return templates_.chat_context.render(bindings);
}

} // namespace gradelens
