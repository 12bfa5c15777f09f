#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "gradelens/engine.hpp"
#include "gradelens/gateway.hpp"
#include "gradelens/model.hpp"
#include "gradelens/prompt.hpp"
#include "gradelens/store.hpp"

namespace gradelens {

struct ChatOptions {
    // characters of discussion appended to a regeneration prompt
    std::size_t digest_budget = 4000;
};

// "User: ...\nAssistant: ...\n" over the user and assistant turns, cut from
// the front so the newest text survives within `budget` characters.
std::string chat_digest(std::span<const StoredMessage> messages, std::size_t budget);

class ChatService {
public:
    ChatService(Store& store, ModelGateway& gateway, const PromptCompiler& compiler,
                AssessmentEngine& engine, ChatOptions options = {});

    // Imported records must be completed records of the context question.
    // Throws Error(unknown_provider | question_not_found | record_not_found).
    ChatSession create_session(std::string_view user_id, std::string_view provider_id,
                               const std::optional<ImportedContext>& context);

    // Throws Error(session_not_found).
    ChatSession get_session(std::string_view session_id) const;

    // Appends the user message, sends the whole history and appends the
    // reply. On a provider error the user message stays in the history and
    // the error propagates; retry_turn resends it. Throws
    // Error(session_not_found | session_busy | bad_request) and provider
    // errors.
    StoredMessage post_message(std::string_view session_id, std::string_view text);

    // Resends the history ending in an unanswered user message.
    StoredMessage retry_turn(std::string_view session_id);

    // New single-record job of origin chat whose prompt carries the
    // discussion digest. Earlier records are untouched. Throws
    // Error(session_not_found | no_imported_context | answer_not_found).
    AssessmentRecord regenerate_assessment(std::string_view session_id, std::string_view answer_id);

private:
    // Marks the session busy; the returned copy carries the new version.
    ChatSession acquire(std::string_view session_id);
    void save(ChatSession& session);
    StoredMessage complete_turn(ChatSession session);

    Store& store_;
    ModelGateway& gateway_;
    const PromptCompiler& compiler_;
    AssessmentEngine& engine_;
    ChatOptions options_;
};

} // namespace gradelens
