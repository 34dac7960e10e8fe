#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace twistlab {

// Counts stay integers; doubles are printed to 6 significant digits.
using Cell = std::variant<std::int64_t, std::uint64_t, double, std::string, bool>;

enum class ReportFormat { csv, json };

struct Report {
    std::string command;
    std::vector<std::pair<std::string, Cell>> meta;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void set(const std::string& key, Cell v) {
        for (auto& [k, old] : meta)
            if (k == key) {
                old = std::move(v);
                return;
            }
        meta.emplace_back(key, std::move(v));
    }
    void add_row(std::vector<Cell> r) {
        if (r.size() != columns.size()) throw std::logic_error("row width does not match the columns");
        rows.push_back(std::move(r));
    }
};

inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

inline std::string cell_text(const Cell& c) {
    struct V {
        std::string operator()(std::int64_t v) const { return std::to_string(v); }
        std::string operator()(std::uint64_t v) const { return std::to_string(v); }
        std::string operator()(double v) const { return format_double(v); }
        std::string operator()(const std::string& v) const { return v; }
        std::string operator()(bool v) const { return v ? "true" : "false"; }
    };
    return std::visit(V{}, c);
}

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

inline nlohmann::ordered_json cell_json(const Cell& c) {
    struct V {
        nlohmann::ordered_json operator()(std::int64_t v) const { return v; }
        nlohmann::ordered_json operator()(std::uint64_t v) const { return v; }
        nlohmann::ordered_json operator()(double v) const {
            if (!std::isfinite(v)) return format_double(v);  // JSON has no inf/nan
            return std::stod(format_double(v));
        }
        nlohmann::ordered_json operator()(const std::string& v) const { return v; }
        nlohmann::ordered_json operator()(bool v) const { return v; }
    };
    return std::visit(V{}, c);
}

}  // namespace detail

inline std::string render_csv(const Report& r) {
    std::ostringstream out;
    out << "# command=" << r.command << '\n';
    for (auto& [k, v] : r.meta) out << "# " << k << '=' << cell_text(v) << '\n';
    for (std::size_t i = 0; i < r.columns.size(); ++i) out << (i ? "," : "") << detail::csv_field(r.columns[i]);
    out << '\n';
    for (auto& row : r.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << detail::csv_field(cell_text(row[i]));
        out << '\n';
    }
    return out.str();
}

inline std::string render_json(const Report& r) {
    nlohmann::ordered_json j;
    j["meta"]["command"] = r.command;
    for (auto& [k, v] : r.meta) j["meta"][k] = detail::cell_json(v);
    j["rows"] = nlohmann::ordered_json::array();
    for (auto& row : r.rows) {
        nlohmann::ordered_json o = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < row.size(); ++i) o[r.columns[i]] = detail::cell_json(row[i]);
        j["rows"].push_back(std::move(o));
    }
    return j.dump(2) + "\n";
}

inline std::string render(const Report& r, ReportFormat f) {
    return f == ReportFormat::csv ? render_csv(r) : render_json(r);
}

// Empty path means stdout.
inline void write_report(const Report& r, ReportFormat f, const std::string& path) {
    const std::string text = render(r, f);
    if (path.empty() || path == "-") {
        std::fwrite(text.data(), 1, text.size(), stdout);
        std::fflush(stdout);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace twistlab
