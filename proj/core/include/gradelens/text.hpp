#pragma once

#include <string>
#include <string_view>
#include <vector>

// Small text helpers shared by the prompt, mock and highlight code.
namespace gradelens {

bool is_space(char32_t c);
bool is_blank(std::string_view text);
std::string_view trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);

std::vector<std::string_view> split_whitespace(std::string_view text);

// Lowercased word with all ASCII punctuation removed ("Don't," -> "dont").
std::string normalize_word(std::string_view word);

// Normalized words of length >= 4, in order of appearance.
std::vector<std::string> content_words(std::string_view text);

// Decodes UTF-8 into code points. Invalid bytes decode to U+FFFD so offsets
// stay well defined for arbitrary input.
std::u32string decode_utf8(std::string_view text);
std::string encode_utf8(std::u32string_view text);

} // namespace gradelens
