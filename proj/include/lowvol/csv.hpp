// Minimal CSV reading/writing. Files are UTF-8, comma-separated, one header
// row, no quoting (none of our formats needs it). Readers report file and
// line number on every error. Writers go through an atomic
// write-temp-then-rename so partially written outputs are never observed.
#pragma once

#include <string>
#include <vector>
#include <functional>

namespace lowvol {

struct CsvRow {
    const std::vector<std::string>* fields;
    int line_no; // 1-based, header = 1
};

// Reads `path`, checks the header matches `expected_header` exactly, and
// invokes `on_row` per data row with fields split on ','. Throws DomainError
// on I/O problems, header mismatch, or wrong field count.
void read_csv(const std::string& path,
              const std::vector<std::string>& expected_header,
              const std::function<void(const CsvRow&)>& on_row);

// Parses a floating-point field; throws DomainError naming `context` when the
// field is not a finite number.
double parse_number(const std::string& field, const std::string& context);

// Formats a double with round-trippable precision (%.17g), so re-loading an
// emitted file reproduces bitwise-identical values.
std::string fmt_full(double v);

// Writes `content` to `path` atomically (temp file in the same directory,
// then rename). Creates parent directories as needed.
void write_file_atomic(const std::string& path, const std::string& content);

} // namespace lowvol
