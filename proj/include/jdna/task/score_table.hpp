#pragma once

#include <charconv>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "jdna/core/binary_io.hpp"
#include "jdna/core/error.hpp"

namespace jdna::task {

struct ScoreRow {
    std::string task;
    double human = 0.0;  // percent
    double model = 0.0;  // percent
    std::string human_text, model_text;  // as written in the source
    std::size_t line = 0;
};

struct ScoreTable {
    std::vector<ScoreRow> rows;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_percent(std::string_view field, const char* column, std::size_t line) {
    double v = 0.0;
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (field.empty() || ec != std::errc{} || ptr != end)
        throw ValidationError("line " + std::to_string(line) + ": " + column + " value '" + std::string(field) +
                                  "' is not numeric",
                              line);
    return v;
}

}  // namespace detail

// CSV with a header naming the columns task, human, model (any order, extra columns ignored).
// Errors carry the 1-based line number of the offending row (the header is line 1).
inline ScoreTable parse_score_table(std::string_view text) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
    ScoreTable table;
    std::size_t line_no = 0;
    int col_task = -1, col_human = -1, col_model = -1;
    std::size_t width = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_commas(line);
        if (width == 0) {
            width = fields.size();
            for (std::size_t i = 0; i < fields.size(); ++i) {
                if (fields[i] == "task") col_task = int(i);
                if (fields[i] == "human") col_human = int(i);
                if (fields[i] == "model") col_model = int(i);
            }
            for (auto [col, name] : {std::pair{col_task, "task"}, {col_human, "human"}, {col_model, "model"}})
                if (col < 0) throw ValidationError("header is missing column '" + std::string(name) + "'", line_no);
            continue;
        }
        if (fields.size() != width)
            throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                                      " fields, got " + std::to_string(fields.size()),
                                  line_no);
        ScoreRow row;
        row.line = line_no;
        row.task = std::string(fields[std::size_t(col_task)]);
        row.human = detail::parse_percent(fields[std::size_t(col_human)], "human", line_no);
        row.model = detail::parse_percent(fields[std::size_t(col_model)], "model", line_no);
        row.human_text = std::string(fields[std::size_t(col_human)]);
        row.model_text = std::string(fields[std::size_t(col_model)]);
        if (!(row.human > 0.0))
            throw ValidationError("line " + std::to_string(line_no) + ": human score must be > 0", line_no);
        if (row.human > 100.0 || row.model < 0.0 || row.model > 100.0)
            throw ValidationError("line " + std::to_string(line_no) + ": scores must lie in [0, 100]", line_no);
        table.rows.push_back(std::move(row));
    }
    if (width == 0) throw ValidationError("empty score table: header required", 1);
    return table;
}

inline ScoreTable load_score_table(const std::filesystem::path& path) {
    return parse_score_table(io::read_file(path));
}

}  // namespace jdna::task
