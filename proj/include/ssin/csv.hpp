#ifndef SSIN_CSV_HPP
#define SSIN_CSV_HPP

#include <string>
#include <vector>

namespace ssin::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

// Plain comma-separated files without quoting. Blank lines and lines starting
// with '#' are skipped; a UTF-8 BOM on the first line is ignored.
Table read(const std::string& path);

// Throws IngestError unless the header matches `expected` exactly.
void expect_header(const Table& t, const std::vector<std::string>& expected, const std::string& path);

std::vector<std::string> split(const std::string& line, char sep = ',');

double parse_double(const std::string& s, const std::string& where);

}  // namespace ssin::csv

#endif  // SSIN_CSV_HPP
