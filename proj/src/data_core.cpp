#include "lowvol/data_core.hpp"
#include "lowvol/csv.hpp"
#include "lowvol/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace lowvol {

namespace {

constexpr int kMaxCarryDays = 10;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RawCell {
    Date date;
    int instrument;
    double value;
};

} // namespace

MarketData load_panel(const std::string& prices_file,
                      const std::string& dividends_file,
                      const std::string& membership_file,
                      const std::string& sectors_file) {
    MarketData m;

    // ---- prices: define calendar and instrument universe --------------------
    std::vector<RawCell> price_rows;
    std::set<Date> date_set;
    read_csv(prices_file, {"date", "instrument", "close"}, [&](const CsvRow& row) {
        const auto& f = *row.fields;
        std::string ctx = prices_file + " line " + std::to_string(row.line_no);
        Date d = parse_date(f[0], ctx);
        double close = parse_number(f[2], ctx);
        if (close <= 0.0)
            throw DomainError(ctx + ": non-positive close " + f[2] + " for " + f[1]);
        auto [it, inserted] = m.id_index.try_emplace(f[1], static_cast<int>(m.ids.size()));
        if (inserted) m.ids.push_back(f[1]);
        price_rows.push_back({d, it->second, close});
        date_set.insert(d);
    });
    if (price_rows.empty())
        throw DomainError(prices_file + ": no price rows");

    m.dates.assign(date_set.begin(), date_set.end());
    const int T = m.days();
    const int N = m.instruments();
    std::map<Date, int> date_idx;
    for (int t = 0; t < T; ++t) date_idx[m.dates[t]] = t;

    m.close.setConstant(T, N, kNaN);
    m.dividend.setZero(T, N);
    m.flag.setZero(T, N);

    for (const auto& c : price_rows) {
        int t = date_idx.at(c.date);
        if (m.flag(t, c.instrument) != 0)
            throw DomainError(prices_file + ": duplicate (" + to_string(c.date) + ", " +
                              m.ids[c.instrument] + ")");
        m.close(t, c.instrument) = c.value;
        m.flag(t, c.instrument) = static_cast<unsigned char>(PriceFlag::real);
    }

    // Forward-fill gaps after the first observation; flag stale beyond 10 days.
    for (int i = 0; i < N; ++i) {
        int carried = 0;
        bool seen = false;
        double last = kNaN;
        for (int t = 0; t < T; ++t) {
            if (m.flag(t, i) == static_cast<unsigned char>(PriceFlag::real)) {
                seen = true;
                carried = 0;
                last = m.close(t, i);
            } else if (seen) {
                ++carried;
                m.close(t, i) = last;
                m.flag(t, i) = static_cast<unsigned char>(
                    carried > kMaxCarryDays ? PriceFlag::stale : PriceFlag::carried);
            }
        }
    }

    // ---- dividends (optional file: empty path = no dividends) -----------------
    std::set<std::pair<int, int>> div_seen;
    if (!dividends_file.empty())
    read_csv(dividends_file, {"date", "instrument", "amount"}, [&](const CsvRow& row) {
        const auto& f = *row.fields;
        std::string ctx = dividends_file + " line " + std::to_string(row.line_no);
        Date d = parse_date(f[0], ctx);
        double amount = parse_number(f[2], ctx);
        if (amount < 0.0)
            throw DomainError(ctx + ": negative dividend " + f[2]);
        auto it = m.id_index.find(f[1]);
        if (it == m.id_index.end())
            throw DomainError(ctx + ": unknown instrument '" + f[1] + "'");
        auto dt = date_idx.find(d);
        if (dt == date_idx.end())
            throw DomainError(ctx + ": date " + f[0] + " not in the trading calendar");
        if (!div_seen.insert({dt->second, it->second}).second)
            throw DomainError(dividends_file + ": duplicate (" + f[0] + ", " + f[1] + ")");
        m.dividend(dt->second, it->second) = amount;
    });

    // ---- membership ----------------------------------------------------------
    m.members.assign(T, {});
    m.member_mask.setZero(T, N);
    std::set<std::tuple<int, int>> mem_seen;
    read_csv(membership_file, {"date", "pool", "instrument"}, [&](const CsvRow& row) {
        const auto& f = *row.fields;
        std::string ctx = membership_file + " line " + std::to_string(row.line_no);
        Date d = parse_date(f[0], ctx);
        if (m.pool_name.empty())
            m.pool_name = f[1];
        else if (m.pool_name != f[1])
            throw DomainError(ctx + ": multiple pools in one file ('" + m.pool_name +
                              "' and '" + f[1] + "'); run pools separately");
        auto it = m.id_index.find(f[2]);
        if (it == m.id_index.end())
            throw DomainError(ctx + ": unknown instrument '" + f[2] + "'");
        auto dt = date_idx.find(d);
        if (dt == date_idx.end())
            throw DomainError(ctx + ": date " + f[0] + " not in the trading calendar");
        if (!mem_seen.insert({dt->second, it->second}).second)
            throw DomainError(membership_file + ": duplicate (" + f[0] + ", " + f[2] + ")");
        m.members[dt->second].push_back(it->second);
        m.member_mask(dt->second, it->second) = 1;
    });
    for (int t = 0; t < T; ++t) {
        if (m.members[t].empty())
            throw DomainError(membership_file + ": no members on " + to_string(m.dates[t]));
        std::sort(m.members[t].begin(), m.members[t].end());
    }

    // ---- sectors (optional file: empty path = untagged) -------------------------
    m.sectors.assign(N, "");
    if (!sectors_file.empty())
    read_csv(sectors_file, {"instrument", "sector"}, [&](const CsvRow& row) {
        const auto& f = *row.fields;
        auto it = m.id_index.find(f[0]);
        if (it == m.id_index.end())
            return; // tags for instruments outside this pool are harmless
        if (!m.sectors[it->second].empty() && m.sectors[it->second] != f[1])
            throw DomainError(sectors_file + " line " + std::to_string(row.line_no) +
                              ": conflicting sector for '" + f[0] + "'");
        m.sectors[it->second] = f[1];
    });

    return m;
}

ReturnPanel compute_returns(const MarketData& m, ReturnMode mode) {
    const int T = m.days(), N = m.instruments();
    if (T < 2)
        throw DomainError("need at least 2 days of data to compute returns");
    ReturnPanel p;
    p.mode = mode;
    p.r.setConstant(T, N, kNaN);
    p.valid.setZero(T, N);
    for (int i = 0; i < N; ++i) {
        for (int t = 1; t < T; ++t) {
            if (m.flag(t, i) == 0 || m.flag(t - 1, i) == 0) continue;
            double prev = m.close(t - 1, i);
            double numer = m.close(t, i) + (mode == ReturnMode::total ? m.dividend(t, i) : 0.0);
            p.r(t, i) = numer / prev - 1.0;
            p.valid(t, i) = 1;
        }
    }
    return p;
}

RiskFreeCurve load_rates(const std::string& rates_file, const MarketData& m) {
    std::map<Date, double> by_date;
    read_csv(rates_file, {"date", "annual_rate"}, [&](const CsvRow& row) {
        const auto& f = *row.fields;
        std::string ctx = rates_file + " line " + std::to_string(row.line_no);
        Date d = parse_date(f[0], ctx);
        double r = parse_number(f[1], ctx);
        if (!by_date.emplace(d, r).second)
            throw DomainError(ctx + ": duplicate date " + f[0]);
    });

    RiskFreeCurve curve;
    curve.annual.assign(m.days(), kNaN);
    int gap = 0;
    double last = kNaN;
    bool seen = false;
    for (int t = 0; t < m.days(); ++t) {
        auto it = by_date.find(m.dates[t]);
        if (it != by_date.end()) {
            last = it->second;
            seen = true;
            gap = 0;
        } else {
            ++gap;
            if (!seen)
                throw DomainError(rates_file + ": no rate on or before " + to_string(m.dates[t]));
            if (gap > kMaxCarryDays)
                throw DomainError(rates_file + ": rate gap exceeds " +
                                  std::to_string(kMaxCarryDays) + " days at " +
                                  to_string(m.dates[t]));
        }
        curve.annual[t] = last;
    }
    return curve;
}

void write_market_csv(const MarketData& m, const std::string& dir,
                      const RiskFreeCurve* rates) {
    std::string prices = "date,instrument,close\n";
    std::string divs = "date,instrument,amount\n";
    std::string membership = "date,pool,instrument\n";
    std::string sectors = "instrument,sector\n";

    for (int t = 0; t < m.days(); ++t) {
        const std::string ds = to_string(m.dates[t]);
        for (int i = 0; i < m.instruments(); ++i) {
            // Only genuine observations are emitted; carried cells regenerate
            // on re-load, which keeps the round-trip exact.
            if (m.flag(t, i) == static_cast<unsigned char>(PriceFlag::real))
                prices += ds + "," + m.ids[i] + "," + fmt_full(m.close(t, i)) + "\n";
            if (m.dividend(t, i) != 0.0)
                divs += ds + "," + m.ids[i] + "," + fmt_full(m.dividend(t, i)) + "\n";
        }
        for (int i : m.members[t])
            membership += ds + "," + m.pool_name + "," + m.ids[i] + "\n";
    }
    for (int i = 0; i < m.instruments(); ++i)
        if (!m.sectors[i].empty())
            sectors += m.ids[i] + "," + m.sectors[i] + "\n";

    write_file_atomic(dir + "/prices.csv", prices);
    write_file_atomic(dir + "/dividends.csv", divs);
    write_file_atomic(dir + "/membership.csv", membership);
    write_file_atomic(dir + "/sectors.csv", sectors);

    if (rates) {
        std::string r = "date,annual_rate\n";
        for (int t = 0; t < m.days(); ++t)
            r += to_string(m.dates[t]) + "," + fmt_full(rates->annual[t]) + "\n";
        write_file_atomic(dir + "/rates.csv", r);
    }
}

} // namespace lowvol
