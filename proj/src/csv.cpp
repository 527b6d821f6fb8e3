#include "lowvol/csv.hpp"
#include "lowvol/errors.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lowvol {

static std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

void read_csv(const std::string& path,
              const std::vector<std::string>& expected_header,
              const std::function<void(const CsvRow&)>& on_row) {
    std::ifstream in(path);
    if (!in)
        throw DomainError("cannot open " + path);

    std::string line;
    int line_no = 0;
    std::vector<std::string> fields;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        fields = split_fields(line);
        if (line_no == 1) {
            if (fields != expected_header) {
                std::string want;
                for (size_t i = 0; i < expected_header.size(); ++i)
                    want += (i ? "," : "") + expected_header[i];
                throw DomainError(path + ": bad header '" + line + "', expected '" + want + "'");
            }
            continue;
        }
        if (fields.size() != expected_header.size())
            throw DomainError(path + " line " + std::to_string(line_no) + ": expected " +
                              std::to_string(expected_header.size()) + " fields, got " +
                              std::to_string(fields.size()));
        on_row(CsvRow{&fields, line_no});
    }
    if (line_no == 0)
        throw DomainError(path + ": empty file (header row required)");
}

double parse_number(const std::string& field, const std::string& context) {
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
        throw DomainError(context + ": bad number '" + field + "'");
    return v;
}

std::string fmt_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path())
        fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw DomainError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out)
            throw DomainError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec)
        throw DomainError("rename " + tmp.string() + " -> " + path + ": " + ec.message());
}

} // namespace lowvol
