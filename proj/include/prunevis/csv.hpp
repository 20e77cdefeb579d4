// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace prunevis {

inline constexpr const char* kCsvSchema = "prunevis.v1";

/// A CSV document with a `# schema=...` comment line before the header.
struct CsvTable {
    std::string schema = kCsvSchema;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row);
    std::size_t column(const std::string& name) const;
    const std::string& cell(std::size_t row, const std::string& name) const;
    double number(std::size_t row, const std::string& name) const;
};

/// Shortest decimal form that reads back to the same double.
std::string fmt(double v);
std::string fmt(long long v);
std::string fmt(unsigned long long v);
inline std::string fmt(int v) { return fmt(static_cast<long long>(v)); }
inline std::string fmt(unsigned long v) { return fmt(static_cast<unsigned long long>(v)); }

std::string to_csv(const CsvTable& t);
/// Throws ConfigError on malformed input or a foreign schema.
CsvTable parse_csv(const std::string& text);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace prunevis
