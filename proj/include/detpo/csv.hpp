#pragma once
#include <cmath>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace detpo {

// Shortest exact decimal representation of a double (round-trips bit-exactly).
inline std::string format_double(double x) {
    char buf[40];
    if (x == static_cast<long long>(x) && std::abs(x) < 1e15) {
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(x));
        return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    // prefer a shorter form when it round-trips
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[40];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, x);
        if (std::strtod(shorter, nullptr) == x) return shorter;
    }
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path);
        columns_ = header.size();
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out_ << ',';
            out_ << header[i];
        }
        out_ << '\n';
    }

    void row(std::initializer_list<double> values) {
        if (values.size() != columns_)
            throw std::runtime_error("csv row width mismatch");
        std::size_t i = 0;
        for (double v : values) {
            if (i++) out_ << ',';
            out_ << format_double(v);
        }
        out_ << '\n';
    }

    // mixed rows (e.g. a seed column plus metrics); caller formats each cell
    void raw_row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_)
            throw std::runtime_error("csv row width mismatch");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
    std::size_t columns_ = 0;
};

}  // namespace detpo
