#include "vcmi/textio.hpp"

#include <climits>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>

#include "vcmi/errors.hpp"

namespace vcmi::textio {

std::string g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_doubles(std::ostream& out, const double* x, int n) {
    for (int i = 0; i < n; ++i) {
        if (i) out << ' ';
        out << g17(x[i]);
    }
    out << '\n';
}

std::string TokenReader::next() {
    std::string tok;
    if (!(in_ >> tok)) throw IoError("unexpected end of input");
    return tok;
}

void TokenReader::expect(std::string_view tag) {
    std::string tok = next();
    if (tok != tag)
        throw IoError("expected '" + std::string(tag) + "', found '" + tok + "'");
}

int TokenReader::next_int() {
    long v = next_long();
    if (v < INT_MIN || v > INT_MAX) throw IoError("integer out of range");
    return static_cast<int>(v);
}

long TokenReader::next_long() {
    std::string tok = next();
    char* end = nullptr;
    long v = std::strtol(tok.c_str(), &end, 10);
    if (end != tok.c_str() + tok.size()) throw IoError("malformed integer '" + tok + "'");
    return v;
}

unsigned long long TokenReader::next_u64() {
    std::string tok = next();
    char* end = nullptr;
    unsigned long long v = std::strtoull(tok.c_str(), &end, 16);
    if (end != tok.c_str() + tok.size()) throw IoError("malformed hex value '" + tok + "'");
    return v;
}

double TokenReader::next_double() {
    std::string tok = next();
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw IoError("malformed number '" + tok + "'");
    return v;
}

}  // namespace vcmi::textio
