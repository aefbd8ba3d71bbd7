#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "finsent/errors.hpp"

namespace finsent {

/// Line-oriented reader for the simple comma-separated formats used by the
/// toolkit (no quoting or embedded commas). Tracks line numbers so schema
/// errors can name the offending row.
class CsvReader {
public:
    CsvReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

    /// Read and validate the header row against the expected column names.
    void expect_header(const std::vector<std::string>& expected) {
        std::vector<std::string> fields;
        if (!next_row(fields)) {
            throw DataError(where() + ": empty file, expected header");
        }
        if (fields != expected) {
            std::ostringstream msg;
            msg << where() << ": bad header, expected '";
            for (std::size_t i = 0; i < expected.size(); ++i) {
                if (i) msg << ",";
                msg << expected[i];
            }
            msg << "'";
            throw DataError(msg.str());
        }
    }

    /// Advance to the next non-empty row. Returns false at end of input.
    bool next_row(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_number_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            fields.clear();
            std::size_t start = 0;
            while (true) {
                std::size_t pos = line.find(',', start);
                if (pos == std::string::npos) {
                    fields.push_back(line.substr(start));
                    break;
                }
                fields.push_back(line.substr(start, pos - start));
                start = pos + 1;
            }
            return true;
        }
        return false;
    }

    void require_fields(const std::vector<std::string>& fields, std::size_t count) const {
        if (fields.size() != count) {
            throw DataError(where() + ": expected " + std::to_string(count) +
                            " fields, got " + std::to_string(fields.size()));
        }
    }

    double parse_double(const std::string& field, std::string_view column) const {
        try {
            std::size_t consumed = 0;
            double v = std::stod(field, &consumed);
            if (consumed != field.size()) throw std::invalid_argument(field);
            return v;
        } catch (const std::exception&) {
            throw DataError(where() + ": invalid number '" + field + "' in column " +
                            std::string(column));
        }
    }

    int parse_int(const std::string& field, std::string_view column) const {
        int v = 0;
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc{} || ptr != field.data() + field.size()) {
            throw DataError(where() + ": invalid integer '" + field + "' in column " +
                            std::string(column));
        }
        return v;
    }

    std::string where() const { return path_ + ":" + std::to_string(line_number_); }

private:
    std::istream& in_;
    std::string path_;
    long line_number_ = 0;
};

inline std::ifstream open_input_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open input file: " + path);
    return in;
}

} // namespace finsent
