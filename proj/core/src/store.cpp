#include "gradelens/store.hpp"

#include <cstdio>

#include "gradelens/error.hpp"

namespace gradelens {

std::string format_id(std::string_view kind, std::int64_t sequence) {
    char digits[32];
    std::snprintf(digits, sizeof digits, "%08lld", static_cast<long long>(sequence));
    return std::string(kind) + "-" + digits;
}

void check_record_invariants(const AssessmentRecord& record) {
    if (!record_is_consistent(record)) {
        fail(ErrorCode::internal,
             "refusing to store record " + record.id + " with status " +
                 std::string(to_string(record.status)) +
                 (record.mark ? " and a mark" : " and no mark"));
    }
}

std::unique_ptr<Store> open_store(std::string_view database_url) {
    if (database_url.empty() || database_url == "memory:" || database_url == "memory://") {
        return make_memory_store();
    }
    if (database_url.starts_with("sqlite://")) {
        return make_sqlite_store(std::string(database_url.substr(9)));
    }
    if (database_url.starts_with("sqlite:")) {
        return make_sqlite_store(std::string(database_url.substr(7)));
    }
    fail(ErrorCode::invalid_config,
         "unsupported DATABASE_URL '" + std::string(database_url) +
             "' (expected memory: or sqlite:<path>)");
}

} // namespace gradelens
