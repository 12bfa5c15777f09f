#include "gradelens/chat.hpp"

#include <vector>

#include "gradelens/error.hpp"
#include "gradelens/text.hpp"

namespace gradelens {

std::string chat_digest(std::span<const StoredMessage> messages, std::size_t budget) {
    std::string digest;
    for (const auto& m : messages) {
        if (m.role == Role::system) continue;
        digest += m.role == Role::user ? "User: " : "Assistant: ";
        digest += m.content;
        digest += '\n';
    }
    if (digest.size() > budget) {
        auto cut = digest.size() - budget;
        // do not start in the middle of a UTF-8 sequence
        while (cut < digest.size() && (static_cast<unsigned char>(digest[cut]) & 0xC0) == 0x80) ++cut;
        digest.erase(0, cut);
    }
    return digest;
}

ChatService::ChatService(Store& store, ModelGateway& gateway, const PromptCompiler& compiler,
                         AssessmentEngine& engine, ChatOptions options)
    : store_(store), gateway_(gateway), compiler_(compiler), engine_(engine), options_(options) {}

ChatSession ChatService::create_session(std::string_view user_id, std::string_view provider_id,
                                        const std::optional<ImportedContext>& context) {
    if (!gateway_.has_provider(provider_id)) {
        fail(ErrorCode::unknown_provider, "unknown provider '" + std::string(provider_id) + "'");
    }
    ChatSession session;
    session.user_id = std::string(user_id);
    session.provider_id = std::string(provider_id);
    session.created_at = now();

    if (context) {
        const auto question = store_.find_question(context->question_id);
        if (!question) {
            fail(ErrorCode::question_not_found, "no question '" + context->question_id + "'");
        }
        std::vector<AssessmentRecord> records;
        std::vector<StudentAnswer> answers;
        for (const auto& id : context->record_ids) {
            auto r = store_.find_record(id);
            if (!r || r->question_id != question->id || r->status != RecordStatus::completed) {
                fail(ErrorCode::record_not_found,
                     "no completed record '" + id + "' for question '" + question->id + "'");
            }
            if (auto a = store_.find_answer(r->answer_id)) answers.push_back(std::move(*a));
            records.push_back(std::move(*r));
        }
        session.context = context;
        session.messages.push_back(
            {Role::system, compiler_.compile_chat_context(*question, records, answers),
             session.created_at});
    }
    session.id = store_.next_id("chat");
    store_.insert_session(session);
    return session;
}

ChatSession ChatService::get_session(std::string_view session_id) const {
    auto session = store_.find_session(session_id);
    if (!session) fail(ErrorCode::session_not_found, "no session '" + std::string(session_id) + "'");
    return std::move(*session);
}

ChatSession ChatService::acquire(std::string_view session_id) {
    auto session = get_session(session_id);
    if (session.busy) fail(ErrorCode::session_busy, "session '" + session.id + "' has a turn in flight");
    session.busy = true;
    save(session);
    return session;
}

void ChatService::save(ChatSession& session) {
    if (!store_.update_session(session)) {
        fail(ErrorCode::session_busy, "session '" + session.id + "' was changed concurrently");
    }
    ++session.version;
}

StoredMessage ChatService::complete_turn(ChatSession session) {
    std::vector<ChatMessage> history;
    history.reserve(session.messages.size());
    for (const auto& m : session.messages) history.push_back({m.role, m.content});
    try {
        const auto completion = gateway_.generate(session.provider_id, history);
        StoredMessage reply{Role::assistant, completion.text, now()};
        session.messages.push_back(reply);
        session.busy = false;
        save(session);
        return reply;
    } catch (...) {
        session.busy = false;
        save(session);
        throw;
    }
}

StoredMessage ChatService::post_message(std::string_view session_id, std::string_view text) {
    if (is_blank(text)) fail(ErrorCode::bad_request, "the message text is empty");
    auto session = get_session(session_id);
    if (session.busy) fail(ErrorCode::session_busy, "session '" + session.id + "' has a turn in flight");
    session.messages.push_back({Role::user, std::string(text), now()});
    session.busy = true;
    save(session);
    return complete_turn(std::move(session));
}

StoredMessage ChatService::retry_turn(std::string_view session_id) {
    auto session = get_session(session_id);
    if (session.messages.empty() || session.messages.back().role != Role::user) {
        fail(ErrorCode::bad_request, "session '" + session.id + "' has no unanswered message");
    }
    return complete_turn(acquire(session_id));
}

AssessmentRecord ChatService::regenerate_assessment(std::string_view session_id,
                                                    std::string_view answer_id) {
    const auto session = get_session(session_id);
    if (!session.context) {
        fail(ErrorCode::no_imported_context, "session '" + session.id + "' has no imported context");
    }
    const auto answer = store_.find_answer(answer_id);
    if (!answer) fail(ErrorCode::answer_not_found, "no answer '" + std::string(answer_id) + "'");
    if (answer->question_id != session.context->question_id) {
        fail(ErrorCode::no_imported_context, "session '" + session.id +
                                                 "' has no context for question '" +
                                                 answer->question_id + "'");
    }

    BatchRequest request;
    request.question_id = answer->question_id;
    request.answer_ids = {answer->id};
    request.provider_ids = {session.provider_id};
    request.origin = RecordOrigin::chat;
    const auto digest = chat_digest(session.messages, options_.digest_budget);
    if (!digest.empty()) {
        request.prompt_suffix = "\n\n" + std::string(headings::discussion) + digest;
    }
    const auto job = engine_.create_batch(request);
    auto status = engine_.run_batch(job.id);
    return std::move(status.records.front());
}

} // namespace gradelens
