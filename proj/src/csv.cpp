// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#include "prunevis/csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "prunevis/errors.hpp"

namespace prunevis {

void CsvTable::add(std::vector<std::string> row) {
    if (row.size() != header.size()) throw ContractError("csv row width does not match the header");
    rows.push_back(std::move(row));
}

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("csv has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

const std::string& CsvTable::cell(std::size_t row, const std::string& name) const {
    return rows.at(row).at(column(name));
}

double CsvTable::number(std::size_t row, const std::string& name) const {
    const auto& s = cell(row, name);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("csv cell '" + s + "' is not a number");
    return v;
}

std::string fmt(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw ContractError("cannot format number");
    return std::string(buf, ptr);
}

std::string fmt(long long v) { return std::to_string(v); }
std::string fmt(unsigned long long v) { return std::to_string(v); }

namespace {

std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw ConfigError("csv line has an unterminated quote");
    out.push_back(std::move(cur));
    return out;
}

}  // namespace

std::string to_csv(const CsvTable& t) {
    std::ostringstream os;
    os << "# schema=" << t.schema << '\n';
    for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << quote(t.header[i]);
    os << '\n';
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << quote(r[i]);
        os << '\n';
    }
    return os.str();
}

CsvTable parse_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    CsvTable t;
    if (!std::getline(is, line) || line.rfind("# schema=", 0) != 0) throw ConfigError("csv lacks a schema line");
    t.schema = line.substr(9);
    if (t.schema != kCsvSchema) throw ConfigError("unsupported csv schema '" + t.schema + "'");
    if (!std::getline(is, line)) throw ConfigError("csv lacks a header");
    t.header = split_line(line);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto row = split_line(line);
        if (row.size() != t.header.size()) throw ConfigError("csv row width does not match the header");
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace prunevis
