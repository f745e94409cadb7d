#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nlmodal {

/// Comma-separated table with '#' comment lines ahead of the header row.
struct CsvTable {
    std::vector<std::string> comments;  ///< without the leading "# "
    std::vector<std::string> columns;
    std::vector<std::string> descriptions;  ///< one per column (may be empty)
    std::vector<std::vector<std::string>> rows;

    int column_index(const std::string& name) const;  ///< -1 if absent
    bool has_column(const std::string& name) const { return column_index(name) >= 0; }
    std::vector<double> numeric(const std::string& name) const;
    std::vector<std::string> text(const std::string& name) const;
    /// Value of a "key=value" comment, empty if absent.
    std::string meta(const std::string& key) const;

    void add_column(std::string name, std::string description);
    void add_row(std::vector<std::string> cells);
};

/// Shortest round-trip decimal representation.
std::string format_number(double v);
std::string format_number(long long v);

/// Writes `# config_hash=<hash>`, the table comments, one `# <column>: <description>` line
/// per column, then the header and rows.
void write_csv(const std::string& path, const CsvTable& table, const std::string& config_hash);
CsvTable read_csv(const std::string& path);

/// Hex digest of the FNV-1a 64-bit hash.
std::string fnv1a_hex(const std::string& text);

}  // namespace nlmodal
