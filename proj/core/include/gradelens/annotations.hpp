#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "gradelens/model.hpp"
#include "gradelens/prompt.hpp"
#include "gradelens/store.hpp"

namespace gradelens {

inline constexpr std::string_view kHumanProvider = "human";
inline constexpr std::string_view kPreferenceSchema = "pref-v1";
inline constexpr std::string_view kSftSchema = "sft-v1";

// Latest gold correction for the answer in log order, else the uploaded
// gold mark.
std::optional<int> effective_gold(const StudentAnswer& answer,
                                  std::span<const AnnotationEvent> events);

// Latest flag per annotator for one record.
std::map<std::string, PreferenceFlag> effective_preferences(std::string_view record_id,
                                                            std::span<const AnnotationEvent> events);

// Appends annotation events and derives training exports from the log.
class AnnotationService {
public:
    AnnotationService(Store& store, const PromptCompiler& compiler);

    // Throws Error(answer_not_found | out_of_range).
    AnnotationEvent correct_gold_label(std::string_view answer_id, int mark,
                                       std::string_view user_id);

    // Throws Error(record_not_found | record_not_completed).
    AnnotationEvent set_preference(std::string_view record_id, PreferenceFlag flag,
                                   std::string_view user_id);

    // Also stores the rationale as a completed record from provider "human".
    // Throws Error(answer_not_found | out_of_range | empty_rationale).
    AnnotationEvent submit_rationale(std::string_view answer_id, int mark,
                                     std::string_view rationale, std::string_view user_id);

    std::optional<int> effective_gold(std::string_view answer_id) const;

    // JSONL, one pref-v1 line per (preferred, not preferred) record pair of
    // the same answer and annotator. Sorted by answer, chosen provider,
    // rejected provider. Throws Error(question_not_found).
    std::string export_preference_pairs(std::string_view question_id) const;

    // JSONL, one sft-v1 line per authored rationale and, with
    // include_preferred, per model record someone flagged preferred.
    // Throws Error(question_not_found).
    std::string export_sft(std::string_view question_id, bool include_preferred) const;

private:
    Question require_question(std::string_view question_id) const;
    StudentAnswer require_answer(std::string_view answer_id) const;

    Store& store_;
    const PromptCompiler& compiler_;
    std::mutex append_mutex_;
};

} // namespace gradelens
