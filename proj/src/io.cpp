#include "envkit/io.hpp"

#include "envkit/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace envkit {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_entry(const std::string& raw, const std::string& whole) {
    const std::string s = trim(raw);
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (!s.empty() && *first == '+')
        ++first;
    const auto res = std::from_chars(first, last, v);
    if (s.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
        throw ConfigError("matrix literal \"" + whole + "\": bad entry \"" + s + "\"");
    return v;
}

} // namespace

Mat parse_matrix_literal(const std::string& text) {
    const auto rows = split(trim(text), ';');
    const int m = static_cast<int>(rows.size());
    const int n = static_cast<int>(split(rows.front(), ',').size());
    if (m < 1 || m > kMaxDim || n < 1 || n > kMaxDim)
        throw ConfigError("matrix literal \"" + text + "\": shape outside 1..4");
    Mat F(m, n);
    for (int i = 0; i < m; ++i) {
        const auto entries = split(rows[i], ',');
        if (static_cast<int>(entries.size()) != n)
            throw ConfigError("matrix literal \"" + text + "\": ragged rows");
        for (int j = 0; j < n; ++j)
            F(i, j) = parse_entry(entries[j], text);
    }
    return F;
}

std::string format_matrix_literal(const Mat& F) {
    std::string out;
    for (int i = 0; i < F.rows(); ++i) {
        if (i)
            out += ';';
        for (int j = 0; j < F.cols(); ++j) {
            if (j)
                out += ',';
            out += format_double(F(i, j));
        }
    }
    return out;
}

Mat matrix_from_json(const nlohmann::json& j) {
    if (j.is_string())
        return parse_matrix_literal(j.get<std::string>());
    if (!j.is_array() || j.empty() || !j.front().is_array())
        throw ConfigError("matrix must be a literal string or an array of rows");
    const int m = static_cast<int>(j.size());
    const int n = static_cast<int>(j.front().size());
    if (m > kMaxDim || n < 1 || n > kMaxDim)
        throw ConfigError("matrix shape outside 1..4");
    Mat F(m, n);
    for (int i = 0; i < m; ++i) {
        if (!j[i].is_array() || static_cast<int>(j[i].size()) != n)
            throw ConfigError("matrix rows must have equal length");
        for (int k = 0; k < n; ++k) {
            if (!j[i][k].is_number())
                throw ConfigError("matrix entries must be numbers");
            F(i, k) = j[i][k].get<double>();
        }
    }
    return F;
}

nlohmann::json matrix_to_json(const Mat& F) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < F.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < F.cols(); ++j)
            row.push_back(F(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json vector_to_json(const Vec& v) {
    nlohmann::json out = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i)
        out.push_back(v(i));
    return out;
}

Vec vector_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty() || j.size() > static_cast<std::size_t>(kMaxDim))
        throw ConfigError("vector must be an array of 1..4 numbers");
    Vec v(static_cast<int>(j.size()));
    for (int i = 0; i < v.size(); ++i)
        v(i) = j[i].get<double>();
    return v;
}

nlohmann::json ext_to_json(ExtReal x) {
    if (x.is_infinite())
        return "inf";
    return x.value();
}

ExtReal ext_from_json(const nlohmann::json& j) {
    if (j.is_string() && j.get<std::string>() == "inf")
        return ExtReal::infinity();
    if (!j.is_number())
        throw ConfigError("extended real must be a number or \"inf\"");
    return ExtReal(j.get<double>());
}

std::string format_double(double x) {
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    if (std::isnan(x))
        return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void stamp_artifact(nlohmann::json& artifact, const nlohmann::json& config, std::uint64_t seed) {
    artifact["tool_version"] = kToolVersion;
    artifact["config_digest"] = fnv1a_hex(config.dump());
    artifact["seed"] = seed;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open \"" + path + "\"");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

nlohmann::json read_json_file(const std::string& path) {
    const std::string text = read_text_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("\"" + path + "\": " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError("cannot write \"" + path + "\"");
    out << text;
}

} // namespace envkit
