#include "threshsplit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "threshsplit/errors.hpp"

namespace threshsplit {

namespace {

// Splits one CSV record into fields. Quoted fields may contain commas and
// doubled quotes; embedded newlines are not supported.
std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (in_quotes) {
        throw ParseError("unterminated quote on line " + std::to_string(line_no));
    }
    fields.push_back(cur);
    return fields;
}

std::string trim_ws(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t line_no, const std::string& col) {
    std::string cell = trim_ws(raw);
    if (cell.empty()) {
        throw ParseError("empty cell in column '" + col + "' on line " + std::to_string(line_no));
    }
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &pos);
    } catch (const std::exception&) {
        throw ParseError("non-numeric cell '" + cell + "' in column '" + col + "' on line " +
                         std::to_string(line_no));
    }
    if (pos != cell.size()) {
        throw ParseError("non-numeric cell '" + cell + "' in column '" + col + "' on line " +
                         std::to_string(line_no));
    }
    if (!std::isfinite(v)) {
        throw ParseError("non-finite cell in column '" + col + "' on line " + std::to_string(line_no));
    }
    return v;
}

// Reads a CSV file into header + numeric-string rows, skipping blank lines.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_nos;
};

CsvTable read_csv_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim_ws(line).empty()) continue;
        auto fields = split_csv_line(line, line_no);
        if (table.header.empty()) {
            for (auto& f : fields) f = trim_ws(f);
            table.header = std::move(fields);
        } else {
            table.rows.push_back(std::move(fields));
            table.line_nos.push_back(line_no);
        }
    }
    if (table.header.empty()) throw SchemaError("missing header row in " + path);
    return table;
}

double sample_sd(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    if (n < 2) return 0.0;
    double mean = v.mean();
    double ss = (v.array() - mean).square().sum();
    return std::sqrt(ss / static_cast<double>(n - 1));
}

}  // namespace

Dataset load_csv_dataset(const std::string& path, const ColumnMap& columns, bool standardize) {
    CsvTable table = read_csv_table(path);

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < table.header.size(); ++j) index[table.header[j]] = j;

    auto col_index = [&](const std::string& name) -> std::size_t {
        auto it = index.find(name);
        if (it == index.end()) throw SchemaError("missing column '" + name + "' in " + path);
        return it->second;
    };

    const std::size_t iy = col_index(columns.y);
    const std::size_t iq = col_index(columns.q);
    const std::size_t is = col_index(columns.s);
    std::vector<std::size_t> ix;
    ix.reserve(columns.x.size());
    for (const auto& name : columns.x) ix.push_back(col_index(name));

    const std::size_t n = table.rows.size();
    if (n == 0) throw EmptyDataError("no data rows in " + path);

    const std::size_t d_named = ix.size();
    const std::size_t d = d_named + (columns.add_intercept ? 1 : 0);
    if (d == 0) throw SchemaError("no regressor columns requested (and add_intercept is off)");

    Dataset data;
    data.y.resize(static_cast<Eigen::Index>(n));
    data.q.resize(static_cast<Eigen::Index>(n));
    data.s.resize(static_cast<Eigen::Index>(n));
    data.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));

    for (std::size_t r = 0; r < n; ++r) {
        const auto& row = table.rows[r];
        const std::size_t line_no = table.line_nos[r];
        if (row.size() != table.header.size()) {
            throw ShapeError("row on line " + std::to_string(line_no) + " has " +
                             std::to_string(row.size()) + " fields, expected " +
                             std::to_string(table.header.size()));
        }
        const auto ri = static_cast<Eigen::Index>(r);
        data.y(ri) = parse_cell(row[iy], line_no, columns.y);
        data.q(ri) = parse_cell(row[iq], line_no, columns.q);
        data.s(ri) = parse_cell(row[is], line_no, columns.s);
        Eigen::Index xc = 0;
        if (columns.add_intercept) data.X(ri, xc++) = 1.0;
        for (std::size_t k = 0; k < d_named; ++k) {
            data.X(ri, xc++) = parse_cell(row[ix[k]], line_no, columns.x[k]);
        }
    }

    if (standardize) return standardize_dataset(data);
    return data;
}

void write_csv_dataset(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open file for writing: " + path);
    out.precision(17);
    out << "y";
    for (Eigen::Index j = 0; j < data.d(); ++j) out << ",x" << (j + 1);
    out << ",q,s\n";
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        out << data.y(i);
        for (Eigen::Index j = 0; j < data.d(); ++j) out << "," << data.X(i, j);
        out << "," << data.q(i) << "," << data.s(i) << "\n";
    }
    if (!out) throw ParseError("write failed: " + path);
}

Dataset standardize_dataset(const Dataset& data) {
    if (data.n() == 0) throw EmptyDataError("cannot standardize an empty dataset");
    if (data.norm.standardized) return data;

    Dataset out = data;
    const double q_mean = data.q.mean();
    const double s_mean = data.s.mean();
    const double q_sd = sample_sd(data.q);
    const double s_sd = sample_sd(data.s);
    if (!(q_sd > 0.0)) throw DegenerateFitError("threshold variable has zero variance");
    if (!(s_sd > 0.0)) throw DegenerateFitError("splitting covariate has zero variance");

    out.q = (data.q.array() - q_mean) / q_sd;
    out.s = (data.s.array() - s_mean) / s_sd;
    out.norm.standardized = true;
    out.norm.q_mean = q_mean;
    out.norm.q_sd = q_sd;
    out.norm.s_mean = s_mean;
    out.norm.s_sd = s_sd;
    return out;
}

double empirical_quantile(const std::vector<double>& sorted_values, double p) {
    const std::size_t n = sorted_values.size();
    if (n == 0) throw EmptyDataError("quantile of empty sample");
    if (p <= 0.0) return sorted_values.front();
    if (p >= 1.0) return sorted_values.back();
    const double h = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

double empirical_quantile(const Eigen::VectorXd& values, double p) {
    std::vector<double> v(values.data(), values.data() + values.size());
    std::sort(v.begin(), v.end());
    return empirical_quantile(v, p);
}

EvalWindow make_eval_window(const Dataset& data, double coverage, std::size_t n_grid,
                            GridMode mode) {
    if (!(coverage > 0.0 && coverage <= 1.0)) {
        throw SizeError("coverage must lie in (0,1]");
    }
    if (n_grid < 1) throw SizeError("n_grid must be at least 1");
    if (data.n() == 0) throw EmptyDataError("cannot build window on empty dataset");

    std::vector<double> s_sorted(data.s.data(), data.s.data() + data.n());
    std::sort(s_sorted.begin(), s_sorted.end());

    EvalWindow window;
    const double tail = (1.0 - coverage) / 2.0;
    window.s0_lo = empirical_quantile(s_sorted, tail);
    window.s0_hi = empirical_quantile(s_sorted, 1.0 - tail);
    if (!(window.s0_lo < window.s0_hi)) {
        throw EmptyWindowError("evaluation window is degenerate: quantiles coincide");
    }

    if (mode == GridMode::observed) {
        if (n_grid > static_cast<std::size_t>(data.n())) {
            throw SizeError("n_grid exceeds the sample size in observed-points mode");
        }
        for (double v : s_sorted) {
            if (v >= window.s0_lo && v <= window.s0_hi) {
                if (window.grid.empty() || v != window.grid.back()) window.grid.push_back(v);
            }
        }
        if (window.grid.empty()) {
            throw EmptyWindowError("no observed points fall inside the window");
        }
    } else {
        window.grid.resize(n_grid);
        if (n_grid == 1) {
            window.grid[0] = 0.5 * (window.s0_lo + window.s0_hi);
        } else {
            const double step = (window.s0_hi - window.s0_lo) / static_cast<double>(n_grid - 1);
            for (std::size_t k = 0; k < n_grid; ++k) {
                window.grid[k] = window.s0_lo + step * static_cast<double>(k);
            }
            window.grid.back() = window.s0_hi;
        }
    }
    return window;
}

Dataset RasterGrid::flatten() const {
    const Eigen::Index n1 = values.rows();
    const Eigen::Index n2 = values.cols();
    if (n1 == 0 || n2 == 0) throw EmptyDataError("cannot flatten an empty raster");
    Dataset data;
    const Eigen::Index n = n1 * n2;
    data.y.resize(n);
    data.q.resize(n);
    data.s.resize(n);
    data.X = Eigen::MatrixXd::Ones(n, 1);
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < n1; ++r) {
        for (Eigen::Index c = 0; c < n2; ++c, ++k) {
            data.y(k) = values(r, c);
            data.q(k) = q_of_row(r);
            data.s(k) = s_of_col(c);
        }
    }
    return data;
}

RasterGrid load_raster_grid(const std::string& path, bool origin_flip) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim_ws(line).empty()) continue;
        auto fields = split_csv_line(line, line_no);
        std::vector<double> row;
        row.reserve(fields.size());
        for (std::size_t j = 0; j < fields.size(); ++j) {
            row.push_back(parse_cell(fields[j], line_no, "col" + std::to_string(j + 1)));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ShapeError("ragged raster row on line " + std::to_string(line_no));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw EmptyDataError("raster file has no rows: " + path);

    RasterGrid grid;
    grid.origin_flip = origin_flip;
    const auto n1 = static_cast<Eigen::Index>(rows.size());
    const auto n2 = static_cast<Eigen::Index>(rows.front().size());
    grid.values.resize(n1, n2);
    for (Eigen::Index r = 0; r < n1; ++r) {
        // With origin_flip the file lists the north row first; store south first.
        const auto src = static_cast<std::size_t>(origin_flip ? (n1 - 1 - r) : r);
        for (Eigen::Index c = 0; c < n2; ++c) {
            grid.values(r, c) = rows[src][static_cast<std::size_t>(c)];
        }
    }
    return grid;
}

}  // namespace threshsplit
