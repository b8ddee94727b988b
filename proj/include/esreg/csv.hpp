#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <esreg/core.hpp>
#include <esreg/errors.hpp>

namespace esreg {

struct CsvOptions {
    std::string response;
    bool add_intercept = true;
    // columns forced to categorical even when every cell parses as a number
    std::set<std::string> categorical;
    // baseline level per categorical column; default is the lexicographically first level
    std::map<std::string, std::string> baseline;
};

/// A design built from a CSV table. Categorical columns expand to one indicator per non-baseline level,
/// named "column=level"; `expansions` maps each source column to its design columns.
struct CsvData {
    Dataset data;
    std::string response;
    std::vector<std::string> source_columns;
    std::map<std::string, std::vector<std::string>> expansions;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cell));
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    if (quoted) throw InputError("line " + std::to_string(line_no) + ": unterminated quoted field");
    out.push_back(std::move(cell));
    return out;
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

inline bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "."; }

inline std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

} // namespace detail

inline CsvData read_csv(std::istream& in, const CsvOptions& opt) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!detail::trim(line).empty()) {
            header = detail::split_csv_line(line, line_no);
            break;
        }
    }
    if (header.empty()) throw InputError("empty CSV input");
    for (auto& h : header) h = detail::trim(h);
    {
        std::set<std::string> seen;
        for (const auto& h : header) {
            if (h.empty()) throw InputError("line 1: empty column name");
            if (!seen.insert(h).second) throw InputError("line 1: duplicate column '" + h + "'");
        }
    }
    const auto resp_it = std::find(header.begin(), header.end(), opt.response);
    if (opt.response.empty() || resp_it == header.end()) {
        throw InputError("response column '" + opt.response + "' not found in header");
    }
    const std::size_t resp = static_cast<std::size_t>(resp_it - header.begin());
    const std::size_t ncol = header.size();

    std::vector<std::vector<std::string>> cells;
    std::vector<std::size_t> lines;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto row = detail::split_csv_line(line, line_no);
        if (row.size() != ncol) {
            throw InputError("line " + std::to_string(line_no) + ": expected " + std::to_string(ncol) + " fields, found " +
                             std::to_string(row.size()));
        }
        for (auto& c : row) c = detail::trim(c);
        cells.push_back(std::move(row));
        lines.push_back(line_no);
    }
    const std::size_t n = cells.size();
    if (n < 2) throw InputError("CSV needs at least two data rows");

    // a column is numeric when every non-missing cell parses and it is not forced categorical
    std::vector<bool> numeric(ncol, true);
    for (std::size_t c = 0; c < ncol; ++c) {
        if (c != resp && opt.categorical.count(header[c])) {
            numeric[c] = false;
            continue;
        }
        for (std::size_t r = 0; r < n && numeric[c]; ++r) {
            if (!detail::is_missing(cells[r][c]) && !detail::parse_number(cells[r][c])) numeric[c] = false;
        }
    }
    auto cell_error = [&](std::size_t r, std::size_t c, const std::string& what) {
        return InputError("line " + std::to_string(lines[r]) + ", column " + std::to_string(c + 1) + " ('" + header[c] +
                          "'): " + what);
    };
    if (!numeric[resp]) {
        for (std::size_t r = 0; r < n; ++r) {
            if (!detail::is_missing(cells[r][resp]) && !detail::parse_number(cells[r][resp])) {
                throw cell_error(r, resp, "response value '" + cells[r][resp] + "' is not numeric");
            }
        }
    }

    CsvData out{Dataset(Vector::Zero(2), Matrix::Ones(2, 1), true), opt.response, {}, {}};
    std::vector<std::string> names;
    std::vector<Vector> cols;
    if (opt.add_intercept) {
        names.emplace_back("(Intercept)");
        cols.push_back(Vector::Ones(static_cast<Index>(n)));
    }
    Vector y(static_cast<Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        if (detail::is_missing(cells[r][resp])) throw cell_error(r, resp, "missing response value");
        y[static_cast<Index>(r)] = *detail::parse_number(cells[r][resp]);
    }
    for (std::size_t c = 0; c < ncol; ++c) {
        if (c == resp) continue;
        out.source_columns.push_back(header[c]);
        if (numeric[c]) {
            Vector v(static_cast<Index>(n));
            for (std::size_t r = 0; r < n; ++r) {
                if (detail::is_missing(cells[r][c])) throw cell_error(r, c, "missing numeric value");
                v[static_cast<Index>(r)] = *detail::parse_number(cells[r][c]);
            }
            names.push_back(header[c]);
            cols.push_back(std::move(v));
            out.expansions[header[c]] = {header[c]};
            continue;
        }
        std::set<std::string> levels;
        for (std::size_t r = 0; r < n; ++r) levels.insert(detail::is_missing(cells[r][c]) ? "NA" : cells[r][c]);
        std::string base = *levels.begin();
        if (auto it = opt.baseline.find(header[c]); it != opt.baseline.end()) {
            if (!levels.count(it->second)) {
                throw InputError("baseline level '" + it->second + "' does not occur in column '" + header[c] + "'");
            }
            base = it->second;
        }
        auto& exp = out.expansions[header[c]];
        for (const auto& lv : levels) {
            if (lv == base) continue;
            Vector v(static_cast<Index>(n));
            for (std::size_t r = 0; r < n; ++r) {
                const std::string cell = detail::is_missing(cells[r][c]) ? "NA" : cells[r][c];
                v[static_cast<Index>(r)] = cell == lv ? 1.0 : 0.0;
            }
            names.push_back(header[c] + "=" + lv);
            exp.push_back(names.back());
            cols.push_back(std::move(v));
        }
    }
    if (cols.empty()) throw InputError("CSV has no predictor columns");
    Matrix X(static_cast<Index>(n), static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) X.col(static_cast<Index>(k)) = cols[k];
    out.data = Dataset(std::move(y), std::move(X), opt.add_intercept, std::move(names));
    return out;
}

inline CsvData read_csv_file(const std::string& path, const CsvOptions& opt) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    return read_csv(in, opt);
}

/// Writes the response followed by every non-intercept design column, at round-trip precision.
inline void write_csv(std::ostream& out, const Dataset& ds, const std::string& response = "y") {
    auto quote = [](const std::string& s) {
        if (s.find_first_of(",\"") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
        return q + "\"";
    };
    out << quote(response);
    const Index first = ds.has_intercept() ? 1 : 0;
    for (Index j = first; j < ds.p(); ++j) out << ',' << quote(ds.column_names()[static_cast<std::size_t>(j)]);
    out << '\n' << std::setprecision(17);
    for (Index i = 0; i < ds.n(); ++i) {
        out << ds.y()[i];
        for (Index j = first; j < ds.p(); ++j) out << ',' << ds.X()(i, j);
        out << '\n';
    }
}

} // namespace esreg
