#pragma once

// Minimal RFC 4180 CSV writing: header row, comma separator, CRLF line ends,
// '.' decimal separator independent of locale, quoting only when required.

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace fedmap::csv {

inline std::string fmt(double v, int digits = 12) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
    return buf;
}

inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(long long v) { return std::to_string(v); }

inline std::string quote_if_needed(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os << ',';
        os << quote_if_needed(fields[i]);
    }
    os << "\r\n";
}

}  // namespace fedmap::csv
