// Calendar dates for trading-day series. Arithmetic on windows is done in
// trading-day indices; Date only supplies ordering, ISO formatting and
// month/year boundaries (monthly rebalance, annual dividend yields).
#pragma once

#include <string>
#include <vector>
#include <cstdint>

namespace lowvol {

struct Date {
    int y = 0;
    int m = 0; // 1..12
    int d = 0; // 1..31

    friend bool operator==(const Date& a, const Date& b) = default;
    friend auto operator<=>(const Date& a, const Date& b) = default;

    // yyyymm key, used to detect month boundaries.
    int month_key() const { return y * 100 + m; }
};

// Parses strict ISO-8601 "YYYY-MM-DD"; throws DomainError with `context`
// (e.g. "prices.csv line 17") on malformed input.
Date parse_date(const std::string& s, const std::string& context);

std::string to_string(const Date& d);

// 0 = Monday .. 6 = Sunday.
int weekday(const Date& d);

// Next calendar day, Gregorian.
Date next_day(const Date& d);

// Synthetic trading calendar: `n` consecutive weekdays starting at `start`
// (start is advanced to a weekday if needed). No holidays.
std::vector<Date> weekday_calendar(Date start, int n);

// True when `i` is the last index of its calendar month within `dates`.
bool is_month_end(const std::vector<Date>& dates, int i);

} // namespace lowvol
