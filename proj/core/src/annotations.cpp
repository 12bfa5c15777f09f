#include "gradelens/annotations.hpp"

#include <algorithm>
#include <set>
#include <tuple>
#include <unordered_map>

#include "gradelens/error.hpp"
#include "gradelens/json_io.hpp"
#include "gradelens/text.hpp"

namespace gradelens {

std::optional<int> effective_gold(const StudentAnswer& answer,
                                  std::span<const AnnotationEvent> events) {
    std::optional<int> gold = answer.gold_mark;
    for (const auto& e : events) {
        if (e.target != answer.id) continue;
        if (const auto* c = std::get_if<GoldCorrection>(&e.payload)) gold = c->mark;
    }
    return gold;
}

std::map<std::string, PreferenceFlag> effective_preferences(std::string_view record_id,
                                                            std::span<const AnnotationEvent> events) {
    std::map<std::string, PreferenceFlag> flags;
    for (const auto& e : events) {
        if (e.target != record_id) continue;
        if (const auto* p = std::get_if<PreferenceMark>(&e.payload)) flags[e.author] = p->flag;
    }
    return flags;
}

AnnotationService::AnnotationService(Store& store, const PromptCompiler& compiler)
    : store_(store), compiler_(compiler) {}

Question AnnotationService::require_question(std::string_view question_id) const {
    auto q = store_.find_question(question_id);
    if (!q) fail(ErrorCode::question_not_found, "no question '" + std::string(question_id) + "'");
    return std::move(*q);
}

StudentAnswer AnnotationService::require_answer(std::string_view answer_id) const {
    auto a = store_.find_answer(answer_id);
    if (!a) fail(ErrorCode::answer_not_found, "no answer '" + std::string(answer_id) + "'");
    return std::move(*a);
}

namespace {

void check_mark(const Question& question, int mark) {
    if (!question.mark_in_range(mark)) {
        fail(ErrorCode::out_of_range, "mark " + std::to_string(mark) + " is outside [0, " +
                                          std::to_string(question.max_mark) + "]");
    }
}

} // namespace

AnnotationEvent AnnotationService::correct_gold_label(std::string_view answer_id, int mark,
                                                      std::string_view user_id) {
    const auto answer = require_answer(answer_id);
    check_mark(require_question(answer.question_id), mark);
    std::lock_guard lock(append_mutex_);
    AnnotationEvent event;
    event.id = store_.next_id("evt");
    event.question_id = answer.question_id;
    event.target = answer.id;
    event.payload = GoldCorrection{mark};
    event.author = std::string(user_id);
    event.timestamp = now();
    store_.append_event(event);
    return event;
}

AnnotationEvent AnnotationService::set_preference(std::string_view record_id, PreferenceFlag flag,
                                                  std::string_view user_id) {
    const auto record = store_.find_record(record_id);
    if (!record) fail(ErrorCode::record_not_found, "no record '" + std::string(record_id) + "'");
    if (record->status != RecordStatus::completed) {
        fail(ErrorCode::record_not_completed,
             "record '" + record->id + "' is " + std::string(to_string(record->status)));
    }
    std::lock_guard lock(append_mutex_);
    AnnotationEvent event;
    event.id = store_.next_id("evt");
    event.question_id = record->question_id;
    event.target = record->id;
    event.payload = PreferenceMark{flag};
    event.author = std::string(user_id);
    event.timestamp = now();
    store_.append_event(event);
    return event;
}

AnnotationEvent AnnotationService::submit_rationale(std::string_view answer_id, int mark,
                                                    std::string_view rationale,
                                                    std::string_view user_id) {
    const auto answer = require_answer(answer_id);
    check_mark(require_question(answer.question_id), mark);
    if (is_blank(rationale)) fail(ErrorCode::empty_rationale, "the rationale is empty");

    std::lock_guard lock(append_mutex_);
    const auto at = now();
    AssessmentRecord record;
    record.id = store_.next_id("rec");
    record.question_id = answer.question_id;
    record.answer_id = answer.id;
    record.provider_id = std::string(kHumanProvider);
    record.status = RecordStatus::completed;
    record.origin = RecordOrigin::human;
    record.mark = mark;
    record.rationale = std::string(rationale);
    record.created_at = at;
    record.finished_at = at;
    store_.insert_record(record);

    AnnotationEvent event;
    event.id = store_.next_id("evt");
    event.question_id = answer.question_id;
    event.target = answer.id;
    event.payload = AuthoredRationale{mark, std::string(rationale), record.id};
    event.author = std::string(user_id);
    event.timestamp = at;
    store_.append_event(event);
    return event;
}

std::optional<int> AnnotationService::effective_gold(std::string_view answer_id) const {
    const auto answer = require_answer(answer_id);
    return gradelens::effective_gold(answer, store_.events_for_target(answer.id));
}

std::string AnnotationService::export_preference_pairs(std::string_view question_id) const {
    const auto question = require_question(question_id);
    const auto events = store_.events_for_question(question_id);

    // latest flag per (annotator, record)
    std::map<std::pair<std::string, std::string>, PreferenceFlag> flags;
    for (const auto& e : events) {
        if (const auto* p = std::get_if<PreferenceMark>(&e.payload)) {
            flags[{e.author, e.target}] = p->flag;
        }
    }

    std::unordered_map<std::string, AssessmentRecord> records;
    for (auto& r : store_.records_for_question(question_id)) records.emplace(r.id, std::move(r));

    struct Side {
        std::vector<const AssessmentRecord*> preferred;
        std::vector<const AssessmentRecord*> rejected;
    };
    // (answer, annotator) -> flagged records
    std::map<std::pair<std::string, std::string>, Side> groups;
    for (const auto& [key, flag] : flags) {
        const auto it = records.find(key.second);
        if (it == records.end() || it->second.status != RecordStatus::completed) continue;
        auto& side = groups[{it->second.answer_id, key.first}];
        (flag == PreferenceFlag::preferred ? side.preferred : side.rejected).push_back(&it->second);
    }

    struct Pair {
        std::string answer_id;
        std::string annotator;
        const AssessmentRecord* chosen;
        const AssessmentRecord* rejected;
    };
    std::vector<Pair> pairs;
    for (const auto& [key, side] : groups) {
        for (const auto* chosen : side.preferred) {
            for (const auto* rejected : side.rejected) {
                if (chosen->id == rejected->id) continue;
                pairs.push_back({key.first, key.second, chosen, rejected});
            }
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        return std::tie(a.answer_id, a.chosen->provider_id, a.rejected->provider_id, a.annotator,
                        a.chosen->id, a.rejected->id) <
               std::tie(b.answer_id, b.chosen->provider_id, b.rejected->provider_id, b.annotator,
                        b.chosen->id, b.rejected->id);
    });

    auto side_json = [](const AssessmentRecord& r) {
        return Json{{"provider", r.provider_id},
                    {"record_id", r.id},
                    {"mark", *r.mark},
                    {"rationale", *r.rationale}};
    };
    std::unordered_map<std::string, std::string> prompts;
    std::string out;
    for (const auto& p : pairs) {
        auto prompt = prompts.find(p.answer_id);
        if (prompt == prompts.end()) {
            const auto answer = require_answer(p.answer_id);
            prompt = prompts.emplace(p.answer_id, compiler_.compile_assessment_prompt(question, answer))
                         .first;
        }
        const Json line{{"schema", kPreferenceSchema},
                        {"question_id", question.id},
                        {"answer_id", p.answer_id},
                        {"prompt", prompt->second},
                        {"chosen", side_json(*p.chosen)},
                        {"rejected", side_json(*p.rejected)},
                        {"annotator", p.annotator}};
        out += line.dump();
        out += '\n';
    }
    return out;
}

std::string AnnotationService::export_sft(std::string_view question_id,
                                          bool include_preferred) const {
    const auto question = require_question(question_id);
    const auto events = store_.events_for_question(question_id);

    std::unordered_map<std::string, std::string> prompts;
    auto prompt_for = [&](const std::string& answer_id) -> const std::string& {
        auto it = prompts.find(answer_id);
        if (it == prompts.end()) {
            it = prompts
                     .emplace(answer_id,
                              compiler_.compile_assessment_prompt(question, require_answer(answer_id)))
                     .first;
        }
        return it->second;
    };
    auto line = [&](const std::string& answer_id, int mark, const std::string& rationale,
                    std::string_view source) {
        return Json{{"schema", kSftSchema},
                    {"prompt", prompt_for(answer_id)},
                    {"mark", mark},
                    {"rationale", rationale},
                    {"source", source}}
                   .dump() +
               '\n';
    };

    std::string out;
    for (const auto& e : events) {
        if (const auto* a = std::get_if<AuthoredRationale>(&e.payload)) {
            out += line(e.target, a->mark, a->text, "human");
        }
    }
    if (!include_preferred) return out;

    std::map<std::pair<std::string, std::string>, PreferenceFlag> flags;
    for (const auto& e : events) {
        if (const auto* p = std::get_if<PreferenceMark>(&e.payload)) {
            flags[{e.target, e.author}] = p->flag;
        }
    }
    std::set<std::string> preferred;
    for (const auto& [key, flag] : flags) {
        if (flag == PreferenceFlag::preferred) preferred.insert(key.first);
    }
    for (const auto& record_id : preferred) {  // id order = creation order
        const auto r = store_.find_record(record_id);
        if (!r || r->origin == RecordOrigin::human || r->status != RecordStatus::completed) continue;
        out += line(r->answer_id, *r->mark, *r->rationale, "preferred_model");
    }
    return out;
}

} // namespace gradelens
