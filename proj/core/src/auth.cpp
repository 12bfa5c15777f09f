#include "gradelens/auth.hpp"

#include <array>

#include <openssl/evp.h>
#include <openssl/rand.h>

#include "gradelens/error.hpp"
#include "gradelens/text.hpp"

namespace gradelens {

namespace {

std::string to_hex(const unsigned char* bytes, std::size_t size) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(size * 2);
    for (std::size_t i = 0; i < size; ++i) {
        out.push_back(digits[bytes[i] >> 4]);
        out.push_back(digits[bytes[i] & 0x0F]);
    }
    return out;
}

} // namespace

std::string hash_token(std::string_view token) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int size = 0;
    if (EVP_Digest(token.data(), token.size(), digest.data(), &size, EVP_sha256(), nullptr) != 1) {
        fail(ErrorCode::internal, "SHA-256 failed");
    }
    return to_hex(digest.data(), size);
}

std::string generate_token() {
    std::array<unsigned char, 32> bytes{};
    if (RAND_bytes(bytes.data(), static_cast<int>(bytes.size())) != 1) {
        fail(ErrorCode::internal, "no randomness for a token");
    }
    return to_hex(bytes.data(), bytes.size());
}

IssuedUser create_user(Store& store, std::string_view display_name, UserRole role) {
    if (is_blank(display_name)) fail(ErrorCode::bad_request, "display name is empty");
    IssuedUser issued;
    issued.token = generate_token();
    issued.profile.id = store.next_id("user");
    issued.profile.display_name = std::string(trim(display_name));
    issued.profile.role = role;
    issued.profile.credential_hash = hash_token(issued.token);
    issued.profile.created_at = now();
    store.insert_user(issued.profile);
    return issued;
}

std::optional<UserProfile> authenticate(const Store& store, std::string_view authorization) {
    constexpr std::string_view scheme = "bearer ";
    authorization = trim(authorization);
    if (authorization.size() <= scheme.size() ||
        to_lower_ascii(authorization.substr(0, scheme.size())) != scheme) {
        return std::nullopt;
    }
    const auto token = trim(authorization.substr(scheme.size()));
    if (token.empty()) return std::nullopt;
    return store.find_user_by_credential(hash_token(token));
}

} // namespace gradelens
