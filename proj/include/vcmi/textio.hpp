#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

namespace vcmi::textio {

// Shortest-exact decimal for a double: 17 significant digits round-trip
// bit-for-bit through strtod. All serialized floats use this.
std::string g17(double x);

void write_doubles(std::ostream& out, const double* x, int n);

// Whitespace-token reader with hard failures: every structured text format in
// the library parses through this so truncation or corruption surfaces as
// IoError instead of silent misreads.
class TokenReader {
public:
    explicit TokenReader(std::istream& in) : in_(in) {}
    std::string next();
    void expect(std::string_view tag);
    int next_int();
    long next_long();
    unsigned long long next_u64();
    double next_double();

private:
    std::istream& in_;
};

}  // namespace vcmi::textio
