#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gradelens/model.hpp"

namespace gradelens {

enum class UploadFormat { csv, jsonl, json_array };

inline constexpr std::size_t kDefaultMaxUploadRows = 10'000;

// Reads an answer batch. CSV needs a header row naming answer_id and
// answer_text, and optionally gold_mark (empty cell = no gold mark); fields
// follow RFC 4180 quoting. JSONL carries one object per line with the same
// field names. Throws Error(bad_request) with the offending row on malformed
// input, fractional marks, or more than `max_rows` rows.
std::vector<StudentAnswer> parse_answer_upload(std::string_view content, UploadFormat format,
                                               std::string_view question_id,
                                               std::size_t max_rows = kDefaultMaxUploadRows);

// Picks a format from a MIME type or file name; CSV when nothing matches.
UploadFormat guess_upload_format(std::string_view content_type, std::string_view filename);

// RFC 4180 reader, exposed for tests.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

} // namespace gradelens
