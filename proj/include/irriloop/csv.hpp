#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace irriloop {

class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numeric table with named columns, stored column-major.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    const std::vector<double>& column(const std::string& name) const;
    bool has_column(const std::string& name) const;
    void add_column(std::string name, std::vector<double> values);
};

CsvTable read_csv(const std::filesystem::path& path);
/// Values are written with 17 significant digits so a read returns identical doubles.
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// Text table with string cells, for reports.
void write_text_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows);

struct TextTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a column; throws CsvError when absent.
    std::size_t index(const std::string& name) const;
};

TextTable read_text_csv(const std::filesystem::path& path);

std::string format_double(double v, int precision = 17);

}  // namespace irriloop
