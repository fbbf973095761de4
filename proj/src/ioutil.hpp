#pragma once

#include "bsf/errors.hpp"

#include <cstdio>
#include <cstdlib>
#include <string>

namespace bsf {

// %.17g: enough digits that binary64 -> text -> binary64 is the identity.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Strict double parse: the whole token must be consumed.
inline double parse_double(const std::string& token, const std::string& where) {
    const char* begin = token.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        throw ParseError(where + ": unparsable numeric value '" + token + "'");
    }
    return v;
}

inline long parse_long(const std::string& token, const std::string& where) {
    const char* begin = token.c_str();
    char* end = nullptr;
    const long v = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0') {
        throw ParseError(where + ": unparsable integer value '" + token + "'");
    }
    return v;
}

} // namespace bsf
