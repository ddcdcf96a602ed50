#include "amigo/time.hpp"

#include <cctype>
#include <cstdio>

#include "amigo/error.hpp"

namespace amigo {

namespace chr = std::chrono;

std::string format_rfc3339(Instant t) {
    auto day = chr::floor<chr::days>(t);
    chr::year_month_day ymd{day};
    chr::hh_mm_ss<Millis> hms{t - day};
    char buf[40];
    int n = std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02lld", static_cast<int>(ymd.year()),
                          static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                          static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                          static_cast<long long>(hms.seconds().count()));
    std::string out(buf, static_cast<std::size_t>(n));
    if (auto ms = hms.subseconds().count(); ms != 0) {
        std::snprintf(buf, sizeof buf, ".%03lld", static_cast<long long>(ms));
        out += buf;
    }
    out += 'Z';
    return out;
}

namespace {

int digits(std::string_view s, std::size_t pos, std::size_t count, std::string_view whole) {
    if (pos + count > s.size()) throw parse_error("truncated timestamp: " + std::string(whole));
    int v = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i])))
            throw parse_error("bad digit in timestamp: " + std::string(whole));
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

void expect(std::string_view s, std::size_t pos, char c, std::string_view whole) {
    if (pos >= s.size() || (s[pos] != c && !(c == 'T' && (s[pos] == 't' || s[pos] == ' '))))
        throw parse_error("malformed timestamp: " + std::string(whole));
}

}  // namespace

Instant parse_rfc3339(std::string_view s) {
    int year = digits(s, 0, 4, s);
    expect(s, 4, '-', s);
    int month = digits(s, 5, 2, s);
    expect(s, 7, '-', s);
    int dayn = digits(s, 8, 2, s);
    expect(s, 10, 'T', s);
    int hour = digits(s, 11, 2, s);
    expect(s, 13, ':', s);
    int minute = digits(s, 14, 2, s);
    expect(s, 16, ':', s);
    int second = digits(s, 17, 2, s);
    std::size_t pos = 19;
    std::int64_t millis = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        int scale = 100;
        std::size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            millis += (s[pos] - '0') * scale;
            scale /= 10;
            ++pos;
        }
        if (pos == start) throw parse_error("empty fraction in timestamp: " + std::string(s));
    }
    if (pos >= s.size()) throw parse_error("missing zone in timestamp: " + std::string(s));
    int offset_min = 0;
    if (s[pos] == 'Z' || s[pos] == 'z') {
        ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
        int sign = s[pos] == '+' ? 1 : -1;
        int oh = digits(s, pos + 1, 2, s);
        expect(s, pos + 3, ':', s);
        int om = digits(s, pos + 4, 2, s);
        offset_min = sign * (oh * 60 + om);
        pos += 6;
    } else {
        throw parse_error("bad zone in timestamp: " + std::string(s));
    }
    if (pos != s.size()) throw parse_error("trailing characters in timestamp: " + std::string(s));

    chr::year_month_day ymd{chr::year{year}, chr::month{static_cast<unsigned>(month)},
                            chr::day{static_cast<unsigned>(dayn)}};
    if (!ymd.ok() || hour > 23 || minute > 59 || second > 60)
        throw parse_error("out-of-range timestamp: " + std::string(s));
    Instant t = chr::sys_days{ymd} + chr::hours{hour} + chr::minutes{minute} + chr::seconds{second} + Millis{millis};
    return t - chr::minutes{offset_min};
}

std::int64_t utc_day(Instant t) { return chr::floor<chr::days>(t).time_since_epoch().count(); }

int utc_hour(Instant t) {
    auto day = chr::floor<chr::days>(t);
    return static_cast<int>(chr::duration_cast<chr::hours>(t - day).count());
}

Instant wall_now() { return chr::time_point_cast<Millis>(chr::system_clock::now()); }

}  // namespace amigo
