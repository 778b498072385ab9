#pragma once

#include "saps/error.hpp"
#include "saps/numerics.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>

namespace saps {

using Json = nlohmann::ordered_json;

namespace json_util {

inline Json parse_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return Json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("'" + path.string() + "': malformed JSON: " + e.what());
    }
}

/// Writes the document with two-space indent and a trailing newline.
inline void write_file(const std::filesystem::path& path, const Json& doc) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open '" + path.string() + "' for writing");
    }
    out << doc.dump(2) << '\n';
    if (!out) {
        throw FormatError("write to '" + path.string() + "' failed");
    }
}

inline const Json& field(const Json& obj, std::string_view ctx, const char* key) {
    if (!obj.is_object()) {
        throw FormatError(std::string(ctx) + ": expected an object");
    }
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw FormatError(std::string(ctx) + ": missing field '" + key + "'");
    }
    return *it;
}

/// Rejects keys outside `allowed`.
inline void only_keys(const Json& obj, std::string_view ctx, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) {
        throw FormatError(std::string(ctx) + ": expected an object");
    }
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (auto a : allowed) {
            ok = ok || key == a;
        }
        if (!ok) {
            throw FormatError(std::string(ctx) + ": unknown field '" + key + "'");
        }
    }
}

inline double get_double(const Json& obj, std::string_view ctx, const char* key) {
    const Json& v = field(obj, ctx, key);
    if (!v.is_number()) {
        throw FormatError(std::string(ctx) + "." + key + ": expected a number");
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
        throw FormatError(std::string(ctx) + "." + key + ": non-finite value");
    }
    return d;
}

inline std::int64_t get_int(const Json& obj, std::string_view ctx, const char* key) {
    const Json& v = field(obj, ctx, key);
    if (!v.is_number_integer()) {
        throw FormatError(std::string(ctx) + "." + key + ": expected an integer");
    }
    return v.get<std::int64_t>();
}

inline std::size_t get_count(const Json& obj, std::string_view ctx, const char* key) {
    const auto v = get_int(obj, ctx, key);
    if (v < 0) {
        throw FormatError(std::string(ctx) + "." + key + ": expected a nonnegative count");
    }
    return static_cast<std::size_t>(v);
}

inline bool get_bool(const Json& obj, std::string_view ctx, const char* key) {
    const Json& v = field(obj, ctx, key);
    if (!v.is_boolean()) {
        throw FormatError(std::string(ctx) + "." + key + ": expected a boolean");
    }
    return v.get<bool>();
}

inline std::string get_string(const Json& obj, std::string_view ctx, const char* key) {
    const Json& v = field(obj, ctx, key);
    if (!v.is_string()) {
        throw FormatError(std::string(ctx) + "." + key + ": expected a string");
    }
    return v.get<std::string>();
}

inline Vector to_vector(const Json& v, const std::string& ctx) {
    if (!v.is_array()) {
        throw FormatError(ctx + ": expected an array of numbers");
    }
    Vector out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) {
            throw FormatError(ctx + "[" + std::to_string(i) + "]: expected a number");
        }
        const double d = v[i].get<double>();
        if (!std::isfinite(d)) {
            throw FormatError(ctx + "[" + std::to_string(i) + "]: non-finite value");
        }
        out.push_back(d);
    }
    return out;
}

inline Vector get_vector(const Json& obj, std::string_view ctx, const char* key) {
    return to_vector(field(obj, ctx, key), std::string(ctx) + "." + key);
}

/// Nested row arrays with the given shape.
inline Matrix get_matrix(const Json& obj, std::string_view ctx, const char* key, std::size_t rows, std::size_t cols) {
    const Json& v = field(obj, ctx, key);
    const std::string name = std::string(ctx) + "." + key;
    if (!v.is_array() || v.size() != rows) {
        throw FormatError(name + ": expected " + std::to_string(rows) + " rows");
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        const Vector r = to_vector(v[i], name + "[" + std::to_string(i) + "]");
        if (r.size() != cols) {
            throw FormatError(name + "[" + std::to_string(i) + "]: expected " + std::to_string(cols) + " columns, got " + std::to_string(r.size()));
        }
        std::copy(r.begin(), r.end(), m.row(i).begin());
    }
    return m;
}

inline Json from_matrix(const Matrix& m) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        rows.push_back(Json(std::vector<double>(r.begin(), r.end())));
    }
    return rows;
}

} // namespace json_util
} // namespace saps
