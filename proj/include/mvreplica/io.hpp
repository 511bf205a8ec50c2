/**
 * @file io.hpp
 * @brief Plot-ready tables (CSV / JSON), r-grid and sigma-spec parsing.
 *
 * CSV layout: one `# spec: {...}` comment line carrying the resolved run
 * parameters as compact JSON, then a header row, then data rows. Numbers
 * are written with 17 significant digits; NaN is written as `nan`.
 *
 * JSON layout: {"spec": {...}, "rows": [{<header>: <value>, ...}, ...]} with
 * NaN written as null.
 */
#pragma once

#include <json.hpp>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mvreplica/philox.hpp"
#include "mvreplica/universe.hpp"

namespace mvreplica::io {

/// Bad user input (grid, sigma spec, files). Maps to exit code 2.
class SpecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Cell = std::variant<double, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t k = 0; k < columns.size(); ++k)
            if (columns[k] == name) return k;
        throw SpecError("missing column '" + name + "'");
    }
    bool has_column(const std::string& name) const {
        for (const auto& c : columns)
            if (c == name) return true;
        return false;
    }
    double number(std::size_t row, const std::string& name) const {
        const auto& cell = rows.at(row).at(column(name));
        if (const auto* d = std::get_if<double>(&cell)) return *d;
        throw SpecError("column '" + name + "' is not numeric");
    }
    std::string text(std::size_t row, const std::string& name) const {
        const auto& cell = rows.at(row).at(column(name));
        if (const auto* s = std::get_if<std::string>(&cell)) return *s;
        throw SpecError("column '" + name + "' is not text");
    }
};

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Parses a decimal, `nan`, `inf` or `-inf`; nullopt when the whole string is not a number.
inline std::optional<double> parse_number(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return std::nullopt;
    return v;
}

inline void write_csv(std::ostream& os, const Table& t, const nlohmann::json& spec) {
    os << "# spec: " << spec.dump() << '\n';
    for (std::size_t k = 0; k < t.columns.size(); ++k) os << (k ? "," : "") << t.columns[k];
    os << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k) os << ',';
            if (const auto* d = std::get_if<double>(&row[k])) os << format_number(*d);
            else os << std::get<std::string>(row[k]);
        }
        os << '\n';
    }
}

inline nlohmann::json to_json(const Table& t, const nlohmann::json& spec) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : t.rows) {
        nlohmann::json obj = nlohmann::json::object();
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (const auto* d = std::get_if<double>(&row[k])) {
                if (std::isfinite(*d)) obj[t.columns[k]] = *d;
                else if (std::isnan(*d)) obj[t.columns[k]] = nullptr;
                else obj[t.columns[k]] = format_number(*d);
            } else {
                obj[t.columns[k]] = std::get<std::string>(row[k]);
            }
        }
        rows.push_back(std::move(obj));
    }
    return {{"spec", spec}, {"rows", rows}};
}

inline void write_json(std::ostream& os, const Table& t, const nlohmann::json& spec) {
    // 17 significant digits are what nlohmann emits for doubles (round-trip exact).
    os << to_json(t, spec).dump(2) << '\n';
}

struct Document {
    nlohmann::json spec;
    Table table;
};

inline Document parse_csv(std::istream& is) {
    Document doc;
    std::string line;
    bool have_header = false;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string tag = "# spec: ";
            if (line.rfind(tag, 0) == 0) doc.spec = nlohmann::json::parse(line.substr(tag.size()));
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        if (!have_header) {
            doc.table.columns = fields;
            have_header = true;
            continue;
        }
        if (fields.size() != doc.table.columns.size()) throw SpecError("CSV row has wrong number of fields");
        std::vector<Cell> row;
        for (const auto& v : fields) {
            if (auto d = parse_number(v)) row.emplace_back(*d);
            else row.emplace_back(v);
        }
        doc.table.rows.push_back(std::move(row));
    }
    if (!have_header) throw SpecError("CSV input has no header row");
    return doc;
}

inline Document parse_json(std::istream& is) {
    Document doc;
    nlohmann::json j = nlohmann::json::parse(is);
    doc.spec = j.value("spec", nlohmann::json::object());
    const auto& rows = j.at("rows");
    for (const auto& r : rows) {
        if (doc.table.columns.empty())
            for (auto it = r.begin(); it != r.end(); ++it) doc.table.columns.push_back(it.key());
        std::vector<Cell> row;
        for (const auto& c : doc.table.columns) {
            const auto& v = r.at(c);
            if (v.is_null()) row.emplace_back(std::numeric_limits<double>::quiet_NaN());
            else if (v.is_number()) row.emplace_back(v.get<double>());
            else {
                const auto s = v.get<std::string>();
                if (s == "inf" || s == "-inf") row.emplace_back(*parse_number(s));
                else row.emplace_back(s);
            }
        }
        doc.table.rows.push_back(std::move(row));
    }
    return doc;
}

/// Reads a table written by write_csv or write_json (detected from the first character).
inline Document read_document(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open '" + path + "'");
    char first = 0;
    while (in.get(first) && std::isspace(static_cast<unsigned char>(first))) {}
    in.unget();
    return first == '{' ? parse_json(in) : parse_csv(in);
}

/// "start:stop:step" (inclusive stop) or a comma-separated list.
inline std::vector<double> parse_grid(const std::string& text) {
    auto number = [&](const std::string& s) {
        auto v = parse_number(s);
        if (!v || !std::isfinite(*v)) throw SpecError("invalid number '" + s + "' in r grid");
        return *v;
    };
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(text);
        std::string p;
        while (std::getline(ss, p, ':')) parts.push_back(p);
        if (parts.size() != 3) throw SpecError("range grid must be start:stop:step");
        const double start = number(parts[0]);
        const double stop = number(parts[1]);
        const double step = number(parts[2]);
        if (!(step > 0.0) || stop < start) throw SpecError("range grid needs step > 0 and stop >= start");
        const auto count = static_cast<long long>(std::floor((stop - start) / step + 1e-9));
        for (long long k = 0; k <= count; ++k) out.push_back(start + static_cast<double>(k) * step);
    } else {
        std::stringstream ss(text);
        std::string p;
        while (std::getline(ss, p, ',')) out.push_back(number(p));
    }
    if (out.empty()) throw SpecError("r grid is empty");
    for (double r : out)
        if (!(r > 0.0)) throw SpecError("r grid values must be positive");
    return out;
}

/// One positive decimal per line; blank lines and `#` comments ignored.
inline std::vector<double> read_sigma_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open sigma file '" + path + "'");
    std::vector<double> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        const std::string tok = line.substr(b, e - b + 1);
        const auto v = parse_number(tok);
        if (!v || !(*v > 0.0) || !std::isfinite(*v))
            throw SpecError("sigma file line " + std::to_string(lineno) + ": expected a positive number");
        out.push_back(*v);
    }
    if (out.empty()) throw SpecError("sigma file contains no values");
    return out;
}

/**
 * Builds the asset universe from `const:<v>`, `file:<path>` or
 * `lognormal:<mu>,<s>,<seed>`. For files, `n` (when nonzero) must match the
 * number of values.
 */
inline AssetUniverse build_universe(const std::string& spec, std::size_t n) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw SpecError("sigma spec must be const:<v>, file:<path> or lognormal:<mu>,<s>,<seed>");
    const std::string kind = spec.substr(0, colon);
    const std::string arg = spec.substr(colon + 1);
    if (kind == "file") {
        auto values = read_sigma_file(arg);
        if (n != 0 && values.size() != n)
            throw SpecError("sigma file has " + std::to_string(values.size()) + " values but --n is " + std::to_string(n));
        return AssetUniverse(std::move(values));
    }
    if (n == 0) throw SpecError("--n must be >= 1");
    if (kind == "const") {
        const auto v = parse_number(arg);
        if (!v || !(*v > 0.0) || !std::isfinite(*v)) throw SpecError("const sigma must be a positive number");
        return AssetUniverse::uniform(n, *v);
    }
    if (kind == "lognormal") {
        std::vector<std::string> parts;
        std::stringstream ss(arg);
        std::string p;
        while (std::getline(ss, p, ',')) parts.push_back(p);
        if (parts.size() != 3) throw SpecError("lognormal sigma spec is lognormal:<mu>,<s>,<seed>");
        const auto mu = parse_number(parts[0]);
        const auto s = parse_number(parts[1]);
        char* end = nullptr;
        const unsigned long long seed = std::strtoull(parts[2].c_str(), &end, 10);
        if (!mu || !s || !std::isfinite(*mu) || !(*s >= 0.0) || end != parts[2].c_str() + parts[2].size())
            throw SpecError("invalid lognormal sigma parameters");
        const Philox4x32 gen = Philox4x32::from_seed(seed, 0x5167a5ULL);
        std::vector<double> sig(n);
        for (std::size_t i = 0; i < n; i += 2) {
            const auto z = gen.normal_pair({static_cast<std::uint32_t>(i / 2), 0u, 0u, 0u});
            sig[i] = std::exp(*mu + *s * z[0]);
            if (i + 1 < n) sig[i + 1] = std::exp(*mu + *s * z[1]);
        }
        return AssetUniverse(std::move(sig));
    }
    throw SpecError("unknown sigma spec kind '" + kind + "'");
}

}  // namespace mvreplica::io
