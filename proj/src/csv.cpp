#include "irriloop/csv.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace irriloop {

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        cell.erase(0, cell.find_first_not_of(" \t\r"));
        cell.erase(cell.find_last_not_of(" \t\r") + 1);
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

const std::vector<double>& CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw CsvError("missing column `" + name + "`");
    return columns[static_cast<std::size_t>(it - header.begin())];
}

bool CsvTable::has_column(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
}

void CsvTable::add_column(std::string name, std::vector<double> values) {
    if (!columns.empty() && values.size() != rows()) {
        throw CsvError("column `" + name + "` has mismatched length");
    }
    header.push_back(std::move(name));
    columns.push_back(std::move(values));
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open " + path.string());
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw CsvError(path.string() + ": empty file");
    table.header = split(line);
    table.columns.resize(table.header.size());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split(line);
        if (cells.size() != table.header.size()) {
            throw CsvError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                           std::to_string(table.header.size()) + " cells");
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            try {
                std::size_t used = 0;
                table.columns[c].push_back(std::stod(cells[c], &used));
                if (used != cells[c].size()) throw std::invalid_argument(cells[c]);
            } catch (const std::exception&) {
                throw CsvError(path.string() + ":" + std::to_string(lineno) +
                               ": not a number: `" + cells[c] + "`");
            }
        }
    }
    return table;
}

std::size_t TextTable::index(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw CsvError("missing column `" + name + "`");
    return static_cast<std::size_t>(it - header.begin());
}

TextTable read_text_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open " + path.string());
    TextTable table;
    std::string line;
    if (!std::getline(in, line)) throw CsvError(path.string() + ": empty file");
    table.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split(line);
        if (cells.size() != table.header.size()) {
            throw CsvError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                           std::to_string(table.header.size()) + " cells");
        }
        table.rows.push_back(std::move(cells));
    }
    return table;
}

std::string format_double(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    std::ofstream out(path);
    if (!out) throw CsvError("cannot write " + path.string());
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        out << (c ? "," : "") << table.header[c];
    }
    out << '\n';
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            out << (c ? "," : "") << format_double(table.columns[c][r]);
        }
        out << '\n';
    }
}

void write_text_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw CsvError("cannot write " + path.string());
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
        out << '\n';
    }
}

}  // namespace irriloop
