#pragma once

// Minimal CSV record tables: comma separated, header row required, RFC 4180
// quoting. Cells are kept as UTF-8 strings; numeric access parses on demand.

#include <charconv>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace linkcorr {

class RecordTable {
public:
    RecordTable() = default;
    RecordTable(std::vector<std::string> columns, std::vector<std::vector<std::string>> rows)
        : columns_(std::move(columns)), rows_(std::move(rows)) {
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            if (rows_[r].size() != columns_.size())
                throw ValidationError("record " + std::to_string(r + 1) + " has " +
                                      std::to_string(rows_[r].size()) + " fields, header has " +
                                      std::to_string(columns_.size()));
        }
    }

    const std::vector<std::string>& columns() const noexcept { return columns_; }
    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }
    const std::string& cell(std::size_t row, std::size_t col) const { return rows_.at(row).at(col); }
    const std::vector<std::string>& row(std::size_t r) const { return rows_.at(r); }

    std::optional<std::size_t> column_index(std::string_view name) const {
        for (std::size_t c = 0; c < columns_.size(); ++c)
            if (columns_[c] == name) return c;
        return std::nullopt;
    }

    std::size_t require_column(std::string_view name) const {
        if (auto c = column_index(name)) return *c;
        throw ValidationError("unknown field '" + std::string(name) + "'");
    }

    std::vector<double> numeric_column(std::string_view name) const;

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

inline std::optional<double> parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

inline std::vector<double> RecordTable::numeric_column(std::string_view name) const {
    const std::size_t c = require_column(name);
    std::vector<double> out;
    out.reserve(rows_.size());
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        auto v = parse_double(rows_[r][c]);
        if (!v)
            throw ValidationError("field '" + std::string(name) + "' of record " +
                                  std::to_string(r + 1) + " is not numeric: '" + rows_[r][c] + "'");
        out.push_back(*v);
    }
    return out;
}

namespace detail {

inline std::vector<std::vector<std::string>> split_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;

    auto end_field = [&] {
        fields.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        // a blank line is not a record
        if (!(fields.size() == 1 && fields.front().empty())) records.push_back(std::move(fields));
        fields.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
        case '"':
            if (field_started && !field.empty())
                throw ValidationError("stray quote inside unquoted CSV field");
            in_quotes = true;
            field_started = true;
            break;
        case ',':
            end_field();
            break;
        case '\r':
            break;
        case '\n':
            end_record();
            break;
        default:
            field.push_back(ch);
            field_started = true;
        }
    }
    if (in_quotes) throw ValidationError("unterminated quoted CSV field");
    if (field_started || !field.empty() || !fields.empty()) end_record();
    return records;
}

inline std::string quote_csv(const std::string& cell) {
    if (cell.find_first_of(",\"\r\n") == std::string::npos) return cell;
    std::string out = "\"";
    for (char ch : cell) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

} // namespace detail

inline RecordTable parse_csv(std::string_view text) {
    if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
        static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF)
        text.remove_prefix(3);
    auto records = detail::split_csv(text);
    if (records.empty()) throw ValidationError("CSV input is empty (header row required)");
    std::vector<std::string> header = std::move(records.front());
    records.erase(records.begin());
    return RecordTable(std::move(header), std::move(records));
}

inline RecordTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_csv(buf.str());
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    auto emit = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c) out << ',';
            out << detail::quote_csv(r[c]);
        }
        out << '\n';
    };
    emit(header);
    for (const auto& r : rows) emit(r);
}

inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

} // namespace linkcorr
