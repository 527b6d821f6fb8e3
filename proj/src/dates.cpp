#include "lowvol/dates.hpp"
#include "lowvol/errors.hpp"

#include <cstdio>
#include <cctype>

namespace lowvol {

static bool leap(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

static int days_in_month(int y, int m) {
    static const int n[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return (m == 2 && leap(y)) ? 29 : n[m - 1];
}

Date parse_date(const std::string& s, const std::string& context) {
    auto fail = [&]() -> Date {
        throw DomainError(context + ": bad date '" + s + "', expected YYYY-MM-DD");
    };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return fail();
    for (int i : {0, 1, 2, 3, 5, 6, 8, 9})
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return fail();
    Date d;
    d.y = std::stoi(s.substr(0, 4));
    d.m = std::stoi(s.substr(5, 2));
    d.d = std::stoi(s.substr(8, 2));
    if (d.m < 1 || d.m > 12 || d.d < 1 || d.d > days_in_month(d.y, d.m)) return fail();
    return d;
}

std::string to_string(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.y, d.m, d.d);
    return buf;
}

int weekday(const Date& dt) {
    // Sakamoto's method, shifted so 0 = Monday.
    static const int t[] = {0, 3, 2, 5, 0, 3, 5, 1, 4, 6, 2, 4};
    int y = dt.y - (dt.m < 3);
    int dow_sun0 = (y + y / 4 - y / 100 + y / 400 + t[dt.m - 1] + dt.d) % 7;
    return (dow_sun0 + 6) % 7;
}

Date next_day(const Date& d) {
    Date n = d;
    if (++n.d > days_in_month(n.y, n.m)) {
        n.d = 1;
        if (++n.m > 12) { n.m = 1; ++n.y; }
    }
    return n;
}

std::vector<Date> weekday_calendar(Date start, int n) {
    std::vector<Date> out;
    out.reserve(n);
    Date d = start;
    while (weekday(d) > 4) d = next_day(d);
    while (static_cast<int>(out.size()) < n) {
        out.push_back(d);
        do { d = next_day(d); } while (weekday(d) > 4);
    }
    return out;
}

bool is_month_end(const std::vector<Date>& dates, int i) {
    if (i < 0 || i >= static_cast<int>(dates.size())) return false;
    if (i + 1 == static_cast<int>(dates.size())) return true;
    return dates[i].month_key() != dates[i + 1].month_key();
}

} // namespace lowvol
