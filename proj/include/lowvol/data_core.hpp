// Canonical market data model: calendar-aligned prices, dividends, pool
// membership, sectors and risk-free rates, plus daily return panels.
//
// The trading calendar is the union of all dates in the price file. An
// instrument missing a price on a calendar day (after its first observation)
// carries the last close forward with a zero price return; after 10
// consecutive carried days the cell is flagged stale. Dividends default to 0.
#pragma once

#include "lowvol/dates.hpp"

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <vector>

namespace lowvol {

enum class PriceFlag : unsigned char {
    absent = 0,  // before first observation (or never observed)
    real = 1,    // price present in the input
    carried = 2, // forward-filled gap, <= 10 consecutive days
    stale = 3,   // forward-filled gap, > 10 consecutive days
};

enum class ReturnMode { total, price };

// Full aligned market: T calendar days x N instruments.
struct MarketData {
    std::vector<Date> dates;            // strictly increasing
    std::vector<std::string> ids;       // instrument ids, insertion order
    std::unordered_map<std::string, int> id_index;
    std::vector<std::string> sectors;   // per instrument, "" when untagged

    Eigen::MatrixXd close;              // T x N, meaningful where flag != absent
    Eigen::MatrixXd dividend;           // T x N, >= 0
    Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> flag; // T x N

    std::string pool_name;
    std::vector<std::vector<int>> members;  // per day, sorted instrument indices
    Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> member_mask; // T x N

    int days() const { return static_cast<int>(dates.size()); }
    int instruments() const { return static_cast<int>(ids.size()); }
    bool is_member(int t, int i) const { return member_mask(t, i) != 0; }
    PriceFlag flag_at(int t, int i) const { return static_cast<PriceFlag>(flag(t, i)); }
    bool has_price(int t, int i) const { return flag(t, i) != 0; }
};

// Daily returns, aligned to the MarketData calendar. r(t,i) is the t-1 -> t
// return; row 0 and pre-listing rows are invalid.
struct ReturnPanel {
    ReturnMode mode = ReturnMode::total;
    Eigen::MatrixXd r;  // T x N
    Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> valid; // T x N

    int days() const { return static_cast<int>(r.rows()); }
    int instruments() const { return static_cast<int>(r.cols()); }
    bool ok(int t, int i) const { return valid(t, i) != 0; }
};

// Annualized risk-free rate per calendar day, Act/252: the daily financing
// rate applied on day t is annual(t)/252.
struct RiskFreeCurve {
    std::vector<double> annual; // aligned to MarketData::dates
    double daily(int t) const { return annual[t] / 252.0; }
};

// Loads and aligns the four core files. Rows with non-positive prices,
// malformed fields, duplicate (date, instrument) pairs, or unknown dates in
// the membership file are hard errors naming file and line. Every backtest
// day must have nonempty membership.
MarketData load_panel(const std::string& prices_file,
                      const std::string& dividends_file,
                      const std::string& membership_file,
                      const std::string& sectors_file);

// Daily returns in the requested mode:
//   total(t) = (close(t) + dividend(t)) / close(t-1) - 1
//   price(t) =  close(t)               / close(t-1) - 1
// so total - price = dividend(t)/close(t-1) exactly.
ReturnPanel compute_returns(const MarketData& m, ReturnMode mode);

// Loads rates.csv and aligns to the market calendar; gaps forward-fill up to
// 10 trading days, anything longer (or a leading gap) is an error.
RiskFreeCurve load_rates(const std::string& rates_file, const MarketData& m);

// Emits prices/dividends/membership/sectors(/rates) in the canonical formats;
// re-loading reproduces the panel bit-for-bit (round-trip property).
void write_market_csv(const MarketData& m, const std::string& dir,
                      const RiskFreeCurve* rates = nullptr);

} // namespace lowvol
