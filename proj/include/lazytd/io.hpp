#pragma once

// CSV tables and JSON conversions for Eigen types.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lazytd/linalg.hpp"

namespace lazytd {

using json = nlohmann::json;

/// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Numeric table written as CSV with a header row.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add_row(std::vector<double> row) {
        if (row.size() != columns.size()) {
            throw DimensionMismatch("table row has " + std::to_string(row.size()) + " cells, expected " +
                                    std::to_string(columns.size()));
        }
        rows.push_back(std::move(row));
    }

    [[nodiscard]] std::size_t column_index(const std::string& name) const {
        for (std::size_t k = 0; k < columns.size(); ++k)
            if (columns[k] == name) return k;
        throw ConfigError("no column named " + name);
    }

    [[nodiscard]] std::vector<double> column(const std::string& name) const {
        const auto k = column_index(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[k]);
        return out;
    }

    [[nodiscard]] std::string to_csv() const {
        std::string out;
        for (std::size_t k = 0; k < columns.size(); ++k) out += (k ? "," : "") + columns[k];
        out += '\n';
        for (const auto& r : rows) {
            for (std::size_t k = 0; k < r.size(); ++k) {
                if (k) out += ',';
                out += format_double(r[k]);
            }
            out += '\n';
        }
        return out;
    }

    static Table from_csv(const std::string& text) {
        Table t;
        std::istringstream in(text);
        std::string line;
        if (!std::getline(in, line)) return t;
        std::string cell;
        std::istringstream header(line);
        while (std::getline(header, cell, ',')) t.columns.push_back(cell);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<double> row;
            std::istringstream cells(line);
            while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
            t.add_row(std::move(row));
        }
        return t;
    }
};

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << text;
}

inline json vec_to_json(const Vec& v) {
    json j = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

inline Vec vec_from_json(const json& j) {
    if (!j.is_array()) throw ConfigError("expected a numeric array");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

inline json mat_to_json(const Mat& m) {
    json j = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(vec_to_json(m.row(r).transpose()));
    return j;
}

inline Mat mat_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw ConfigError("expected a nonempty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Vec row = vec_from_json(j[static_cast<std::size_t>(r)]);
        require_size(row.size(), cols, "matrix row");
        m.row(r) = row.transpose();
    }
    return m;
}

/// Doubles that may be inf/nan are stored as strings so the JSON stays valid.
inline json number_to_json(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return "nan";
    return x > 0 ? "inf" : "-inf";
}

}  // namespace lazytd
