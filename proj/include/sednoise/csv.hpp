#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sednoise/errors.hpp"

namespace sednoise::csv {

/// Splits one CSV line. Handles double-quoted fields with "" escapes; no embedded newlines.
inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += ch;
        }
    }
    if (quoted) throw FormatError("unterminated quoted field in CSV line: " + line);
    out.push_back(std::move(field));
    return out;
}

inline std::string escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column, or -1.
    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
    std::size_t require(const std::string& name, const std::string& source) const {
        const int c = column(name);
        if (c < 0) throw FormatError(source + ": missing column '" + name + "'");
        return static_cast<std::size_t>(c);
    }
};

inline Table parse(std::istream& in, const std::string& source) {
    Table t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            // Strip a UTF-8 byte-order mark.
            if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
            if (line.empty()) throw FormatError(source + ": missing header row");
            t.header = split_line(line);
            first = false;
            continue;
        }
        if (line.empty()) continue;
        auto row = split_line(line);
        if (row.size() != t.header.size())
            throw FormatError(source + ": row " + std::to_string(t.rows.size() + 2) + " has " +
                              std::to_string(row.size()) + " fields, header has " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(row));
    }
    if (first) throw FormatError(source + ": missing header row");
    return t;
}

inline Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open CSV file " + path);
    return parse(in, path);
}

inline std::string join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += escape(fields[i]);
    }
    return out;
}

}  // namespace sednoise::csv
