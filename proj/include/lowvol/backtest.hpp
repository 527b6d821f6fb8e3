// Daily P&L accounting and the statistics built on top of it: performance
// stats, decile portfolios, dividend attribution and tax scenarios,
// multi-horizon compounding ratios, up/down-day differentials, and the
// dividend-yield/volatility cross-section.
//
// Accounting convention: a position taken at the close of day t earns the
// t -> t+1 return. Per stock,
//   pnl(t+1) = x_i(t) * (r_i_total(t+1) - r_rf_daily(t+1)),
// decomposed exactly into a price leg x*r_price, a dividend leg
// x*div(t+1)/close(t) (scaled by 1-tax on long positions), and a financing
// leg -x*r_rf_daily, which nets to -NMV(t)*r_rf_daily(t+1).
#pragma once

#include "lowvol/data_core.hpp"
#include "lowvol/estimators.hpp"
#include "lowvol/neutral_portfolio.hpp"

#include <array>
#include <optional>
#include <vector>

namespace lowvol {

struct PnlSeries {
    int first = -1, last = -1;   // inclusive calendar-index range with P&L
    Eigen::VectorXd total;       // per calendar day, 0 outside the range
    Eigen::VectorXd price;
    Eigen::VectorXd dividend;
    Eigen::VectorXd financing;

    Eigen::VectorXd unfinanced() const { return price + dividend; }
    int days() const { return last >= first && first >= 0 ? last - first + 1 : 0; }
};

// Runs the accounting loop. Positions must be dated strictly before the
// returns they earn and may only hold pool members as of their date; a
// nonzero position in a non-member is an error (exits are liquidated by
// giving the instrument no position on its first non-member day, so it earns
// its final return and is flat at that day's close).
PnlSeries run_backtest(const std::vector<PositionVector>& positions,
                       const MarketData& m, const RiskFreeCurve& rates,
                       double dividend_tax = 0.0);

// Same pair of books under a dividend tax in [0, 1]: long dividends scaled by
// (1 - tax), short dividend payments unscaled.
PnlSeries dividend_tax_scenario(const std::vector<PositionVector>& positions,
                                const MarketData& m, const RiskFreeCurve& rates,
                                double tax);

struct AttributionRatio {
    double financed = 0.0;   // cum dividend leg / cum total
    double unfinanced = 0.0; // cum dividend leg / cum (price + dividend)
};

// Share of cumulative P&L contributed by dividends; NaN when the cumulative
// total is indistinguishable from zero. Can exceed 1.
AttributionRatio dividend_attribution(const PnlSeries& pnl);

struct PerfStats {
    double mean_daily = 0.0;
    double std_daily = 0.0;
    double sharpe = 0.0;    // mean/std * sqrt(252)
    double t_stat = 0.0;    // sharpe * sqrt(years)
    double skewness = 0.0;  // (mean - median) / rms
    int n_days = 0;
};

// Stats of a daily series (needs >= 252 observations, nonzero variance).
PerfStats perf_stats(const Eigen::VectorXd& daily);

// Financed (Sharpe) and un-financed (Information Ratio) stats of a backtest.
struct StrategyStats {
    PerfStats financed;
    PerfStats unfinanced;
};
StrategyStats strategy_stats(const PnlSeries& pnl);

// ---- decile portfolios -------------------------------------------------------

// Equal-weight long-only portfolios of the lagged-sigma deciles
// (decile index 0 = most volatile tenth), reformed at each month's last
// trading day, effective the next day; daily returns are the mean of the
// members' returns.
struct DecileReport {
    struct Row {
        double information_ratio = 0.0;
        double sharpe = 0.0;
        double skewness = 0.0;
        std::array<double, 4> mean_nday{}; // n = 1, 5, 10, 20
        double avg_size = 0.0;
    };
    std::array<Row, 10> rows;
    Eigen::MatrixXd daily; // T x 10 decile returns, NaN before the first rebalance
    int first = -1, last = -1;
    static constexpr std::array<int, 4> horizons{1, 5, 10, 20};
};

DecileReport decile_portfolios(const RollingEstimators& est, const ReturnPanel& panel,
                               const MarketData& m, const RiskFreeCurve& rates);

// Balanced sigma-decile assignment at date t (sizes differ by at most 1);
// entry d[k] lists the instrument indices of decile k, most volatile first.
std::vector<std::vector<int>> assign_sigma_deciles(const RollingEstimators& est,
                                                   const MarketData& m, int t);

// ---- compounding --------------------------------------------------------------

// compound(a, b) = (1+a)(1+b) - 1; recoup(d) = the gain required to undo a
// drawdown d, -d/(1+d).
double compound(double a, double b);
double recoup(double drawdown);

struct CompoundingReport {
    std::vector<int> horizons;
    std::vector<double> decile1_mean;  // most volatile decile
    std::vector<double> decile10_mean; // least volatile decile
    std::vector<double> ratio;         // decile1/decile10, NaN when degenerate
};

// Mean n-day compounded ex-dividend return per extreme decile, averaged over
// stocks and monthly formation dates; ratio decile1/decile10 per horizon.
CompoundingReport compounding_ratio(const RollingEstimators& est,
                                    const ReturnPanel& price_panel,
                                    const MarketData& m,
                                    const std::vector<int>& horizons = {1, 5, 10, 20});

// ---- conditional differentials -------------------------------------------------

struct UpDownReport {
    double ratio = 0.0;    // |mean gap on down days| / |mean gap on up days|
    double up_gap = 0.0;   // mean (decile1 - decile10) on index-up days
    double down_gap = 0.0; // same on index-down days
    int n_up = 0, n_down = 0;
};

// Splits days by the sign of the equi-weighted index return (zeros dropped)
// and compares the high-minus-low-vol decile return gap across the two sets.
UpDownReport updown_differential(const DecileReport& deciles,
                                 const RollingEstimators& est);

// ---- dividend yield vs volatility ----------------------------------------------

struct DyVolReport {
    double correlation = 0.0; // pooled over (year-end, instrument) points
    int n_points = 0;
    std::vector<std::pair<double, double>> binned; // (mean sigma, mean DY) per 2000 points
};

// Trailing-12-month dividend yield against trailing 250-day volatility,
// sampled at each year's last trading day and pooled.
DyVolReport dy_vol_correlation(const MarketData& m, const ReturnPanel& total_panel);

} // namespace lowvol
