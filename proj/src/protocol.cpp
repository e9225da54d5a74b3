#include <cstdio>
#include <string>

#include "kinfit/gauss_newton.hpp"

namespace kinfit {

namespace {

// Column widths: iteration, Normf, star, Normx, damping, rank.
constexpr int w_it = 9, w_f = 17, w_star = 3, w_x = 12, w_damp = 13, w_rank = 7;

std::string printf_string(const char* fmt, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

}  // namespace

std::string format_protocol_header() {
    return printf_string("%*s%*s%*s%*s%*s%*s\n", w_it, "G-N It.", w_f, "Normf", w_star, "", w_x, "Normx", w_damp,
                         "Damp. Fctr.", w_rank, "Rank");
}

std::string format_protocol_row(const ProtocolRow& row) {
    const int it = static_cast<int>(row.iteration);
    switch (row.kind) {
        case ProtocolRow::Kind::initial:
        case ProtocolRow::Kind::ordinary:
            return printf_string("%*d%*.7e%*s%*.3e%*s%*zu\n", w_it, it, w_f, row.normf, w_star, "", w_x, row.normx,
                                 w_damp, "", w_rank, row.rank);
        case ProtocolRow::Kind::simplified:
        case ProtocolRow::Kind::final:
            return printf_string("%*d%*.7e%*s%*.3e%*.5f\n", w_it, it, w_f, row.normf, w_star,
                                 row.kind == ProtocolRow::Kind::final ? "." : "*", w_x, row.normx, w_damp,
                                 row.damping);
        case ProtocolRow::Kind::incompatibility: {
            const std::string text = printf_string("incompatibility factor: %.5f", row.kappa);
            return printf_string("%*d%*s\n", w_it, it, w_f + w_star + w_x + w_damp, text.c_str());
        }
    }
    return {};
}

std::string format_protocol(const std::vector<ProtocolRow>& rows) {
    std::string out = format_protocol_header();
    for (const auto& r : rows) out += format_protocol_row(r);
    return out;
}

}  // namespace kinfit
