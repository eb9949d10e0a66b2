// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "rmtbias/numeric.hpp"

namespace rmtbias {

// Minimal CSV writer: mandatory header row, comma separation, quoting only
// when a cell contains a comma, quote, or newline. Numeric cells go through
// format_double so files are byte-stable across runs and thread counts.
class CsvWriter {
public:
    CsvWriter(std::ostream& out, std::vector<std::string> header) : out_(out) {
        write_row_(header);
        columns_ = header.size();
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_)
            throw std::logic_error("csv row width does not match header");
        write_row_(cells);
    }

    static std::string cell(double v) { return format_double(v); }
    static std::string cell(const std::string& v) { return v; }

private:
    static std::string escape_(const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        q += '"';
        return q;
    }

    void write_row_(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << escape_(cells[i]);
        }
        out_ << '\n';
    }

    std::ostream& out_;
    std::size_t columns_ = 0;
};

} // namespace rmtbias
