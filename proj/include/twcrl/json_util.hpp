#pragma once

// Exact decimal I/O for real arrays embedded in JSON documents.

#include "twcrl/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace twcrl {

namespace detail {

inline void write_number(std::ostream& os, double x) {
    if (!std::isfinite(x)) throw ValidationError("cannot serialize non-finite value");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    os << buf;
}

inline void write_vec(std::ostream& os, const std::vector<double>& v) {
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ',';
        write_number(os, v[i]);
    }
    os << ']';
}

inline void write_matrix(std::ostream& os, const std::vector<std::vector<double>>& rows) {
    os << '[';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i) os << ',';
        write_vec(os, rows[i]);
    }
    os << ']';
}

inline std::vector<double> read_vec(const nlohmann::json& j, const char* what) {
    if (!j.is_array()) throw ValidationError(std::string(what) + " must be an array");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number()) throw ValidationError(std::string(what) + " must contain numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

inline std::vector<std::vector<double>> read_matrix(const nlohmann::json& j, const char* what) {
    if (!j.is_array()) throw ValidationError(std::string(what) + " must be an array of arrays");
    std::vector<std::vector<double>> out;
    out.reserve(j.size());
    for (const auto& row : j) out.push_back(read_vec(row, what));
    return out;
}

}  // namespace detail

}  // namespace twcrl
