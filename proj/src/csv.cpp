#include "nlmodal/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nlmodal/error.hpp"

namespace nlmodal {

int CsvTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    return -1;
}

std::vector<double> CsvTable::numeric(const std::string& name) const {
    const int c = column_index(name);
    if (c < 0) fail(ErrorCode::Schema, "missing column '" + name + "'");
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        const std::string& cell = r[static_cast<std::size_t>(c)];
        double v = 0.0;
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
            if (cell == "nan") v = std::nan("");
            else if (cell == "inf") v = HUGE_VAL;
            else if (cell == "-inf") v = -HUGE_VAL;
            else fail(ErrorCode::Schema, "column '" + name + "' holds non-numeric value '" + cell + "'");
        }
        out.push_back(v);
    }
    return out;
}

std::vector<std::string> CsvTable::text(const std::string& name) const {
    const int c = column_index(name);
    if (c < 0) fail(ErrorCode::Schema, "missing column '" + name + "'");
    std::vector<std::string> out;
    for (const auto& r : rows) out.push_back(r[static_cast<std::size_t>(c)]);
    return out;
}

std::string CsvTable::meta(const std::string& key) const {
    const std::string prefix = key + "=";
    for (const auto& c : comments)
        if (c.rfind(prefix, 0) == 0) return c.substr(prefix.size());
    return {};
}

void CsvTable::add_column(std::string name, std::string description) {
    columns.push_back(std::move(name));
    descriptions.push_back(std::move(description));
}

void CsvTable::add_row(std::vector<std::string> cells) {
    if (cells.size() != columns.size()) fail(ErrorCode::Schema, "row width differs from header");
    rows.push_back(std::move(cells));
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string format_number(long long v) { return std::to_string(v); }

void write_csv(const std::string& path, const CsvTable& table, const std::string& config_hash) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorCode::Io, "cannot write " + path);
    os << "# config_hash=" << config_hash << '\n';
    for (const auto& c : table.comments) os << "# " << c << '\n';
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
        const std::string d = i < table.descriptions.size() ? table.descriptions[i] : std::string();
        if (!d.empty()) os << "# " << table.columns[i] << ": " << d << '\n';
    }
    for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << table.columns[i];
    os << '\n';
    for (const auto& r : table.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
        os << '\n';
    }
    if (!os) fail(ErrorCode::Io, "write failed for " + path);
}

CsvTable read_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::Io, "cannot read " + path);
    CsvTable t;
    std::string line;
    std::vector<std::string> raw_comments;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!s.empty() && s.back() == ',') cells.emplace_back();
        return cells;
    };
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::string c = line.substr(1);
            if (!c.empty() && c[0] == ' ') c.erase(0, 1);
            raw_comments.push_back(c);
            continue;
        }
        if (t.columns.empty()) {
            t.columns = split(line);
            continue;
        }
        auto cells = split(line);
        if (cells.size() != t.columns.size())
            fail(ErrorCode::Schema, path + ": row width differs from header");
        t.rows.push_back(std::move(cells));
    }
    if (t.columns.empty()) fail(ErrorCode::Schema, path + ": no header row");
    t.descriptions.assign(t.columns.size(), {});
    for (const auto& c : raw_comments) {
        const auto colon = c.find(": ");
        if (colon != std::string::npos) {
            const int idx = t.column_index(c.substr(0, colon));
            if (idx >= 0) {
                t.descriptions[static_cast<std::size_t>(idx)] = c.substr(colon + 2);
                continue;
            }
        }
        t.comments.push_back(c);
    }
    return t;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace nlmodal
