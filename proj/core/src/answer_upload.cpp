#include "gradelens/answer_upload.hpp"

#include <algorithm>

#include "gradelens/error.hpp"
#include "gradelens/json_io.hpp"
#include "gradelens/text.hpp"

namespace gradelens {

namespace {

[[noreturn]] void bad_row(std::size_t row, const std::string& why) {
    fail(ErrorCode::bad_request, "row " + std::to_string(row) + ": " + why);
}

void check_row_limit(std::size_t rows, std::size_t max_rows) {
    if (rows > max_rows) {
        fail(ErrorCode::bad_request, "upload has more than " + std::to_string(max_rows) + " rows");
    }
}

std::vector<StudentAnswer> from_csv(std::string_view content, std::string_view question_id,
                                    std::size_t max_rows) {
    if (content.starts_with("\xEF\xBB\xBF")) content.remove_prefix(3);
    auto rows = parse_csv(content);
    if (rows.empty()) fail(ErrorCode::bad_request, "CSV upload is empty");

    const auto& header = rows.front();
    auto column = [&](std::string_view name) -> std::ptrdiff_t {
        auto it = std::find_if(header.begin(), header.end(),
                               [&](const std::string& h) { return trim(h) == name; });
        return it == header.end() ? -1 : it - header.begin();
    };
    const auto id_col = column("answer_id");
    const auto text_col = column("answer_text");
    const auto gold_col = column("gold_mark");
    if (id_col < 0 || text_col < 0) {
        fail(ErrorCode::bad_request, "CSV header must name answer_id and answer_text");
    }
    check_row_limit(rows.size() - 1, max_rows);

    std::vector<StudentAnswer> answers;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && row[0].empty()) continue;  // blank line
        if (row.size() != header.size()) {
            bad_row(r, "expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(row.size()));
        }
        StudentAnswer answer;
        answer.id = std::string(trim(row[static_cast<std::size_t>(id_col)]));
        answer.question_id = std::string(question_id);
        answer.text = row[static_cast<std::size_t>(text_col)];
        if (answer.id.empty()) bad_row(r, "answer_id is empty");
        if (gold_col >= 0) {
            const auto cell = trim(row[static_cast<std::size_t>(gold_col)]);
            if (!cell.empty()) {
                answer.gold_mark = parse_integer_text(cell);
                if (!answer.gold_mark) {
                    bad_row(r, "gold_mark '" + std::string(cell) + "' is not an integer");
                }
            }
        }
        answers.push_back(std::move(answer));
    }
    return answers;
}

StudentAnswer answer_from_object(const Json& j, std::string_view question_id, std::size_t row) {
    try {
        auto answer = j.get<StudentAnswer>();
        if (answer.question_id.empty()) answer.question_id = std::string(question_id);
        return answer;
    } catch (const Error& e) {
        bad_row(row, e.what());
    }
}

std::vector<StudentAnswer> from_jsonl(std::string_view content, std::string_view question_id,
                                      std::size_t max_rows) {
    std::vector<StudentAnswer> answers;
    std::size_t row = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        auto eol = content.find('\n', pos);
        if (eol == std::string_view::npos) eol = content.size();
        const auto line = trim(content.substr(pos, eol - pos));
        pos = eol + 1;
        ++row;
        if (line.empty()) continue;
        check_row_limit(answers.size() + 1, max_rows);
        const auto j = Json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) bad_row(row, "not a JSON object");
        answers.push_back(answer_from_object(j, question_id, row));
    }
    return answers;
}

std::vector<StudentAnswer> from_json_array(std::string_view content, std::string_view question_id,
                                           std::size_t max_rows) {
    const auto j = Json::parse(content, nullptr, false);
    if (j.is_discarded() || !j.is_array()) {
        fail(ErrorCode::bad_request, "expected a JSON array of answers");
    }
    check_row_limit(j.size(), max_rows);
    std::vector<StudentAnswer> answers;
    for (std::size_t i = 0; i < j.size(); ++i) {
        answers.push_back(answer_from_object(j[i], question_id, i + 1));
    }
    return answers;
}

} // namespace

std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
    };

    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') {
            continue;
        } else if (c == '\n') {
            end_row();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) fail(ErrorCode::bad_request, "CSV has an unterminated quoted field");
    if (field_started || !row.empty()) end_row();
    return rows;
}

UploadFormat guess_upload_format(std::string_view content_type, std::string_view filename) {
    const auto type = to_lower_ascii(content_type);
    const auto name = to_lower_ascii(filename);
    if (type.find("ndjson") != std::string::npos || type.find("jsonl") != std::string::npos ||
        name.ends_with(".jsonl") || name.ends_with(".ndjson")) {
        return UploadFormat::jsonl;
    }
    if (type.find("json") != std::string::npos || name.ends_with(".json")) {
        return UploadFormat::json_array;
    }
    return UploadFormat::csv;
}

std::vector<StudentAnswer> parse_answer_upload(std::string_view content, UploadFormat format,
                                               std::string_view question_id,
                                               std::size_t max_rows) {
    switch (format) {
    case UploadFormat::csv: return from_csv(content, question_id, max_rows);
    case UploadFormat::jsonl: return from_jsonl(content, question_id, max_rows);
    case UploadFormat::json_array: return from_json_array(content, question_id, max_rows);
    }
    return {};
}

} // namespace gradelens
