#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "gradelens/model.hpp"
#include "gradelens/store.hpp"

namespace gradelens {

// Lowercase hex SHA-256. Only this digest of a token is stored.
std::string hash_token(std::string_view token);

// 32 random bytes, hex encoded.
std::string generate_token();

struct IssuedUser {
    UserProfile profile;
    // shown once; the store keeps only its hash
    std::string token;
};

// Throws Error(bad_request) for a blank display name.
IssuedUser create_user(Store& store, std::string_view display_name, UserRole role);

// Accepts an "Authorization" header value of the form "Bearer <token>".
std::optional<UserProfile> authenticate(const Store& store, std::string_view authorization);

} // namespace gradelens
