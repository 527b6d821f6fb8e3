// Comparison factors built through the identical pipeline, monthly P&L
// correlation tables, least-squares residualization, holdings-bias
// correlations, and dividend-yield decile betas.
#pragma once

#include "lowvol/strategy.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lowvol {

// Metric values per (date, instrument), loaded from the generic long-form
// CSV and forward-filled (as-of join) onto the trading calendar.
struct MetricTable {
    std::map<std::string, Eigen::MatrixXd> panels; // metric -> T x N, NaN before first value

    bool has(const std::string& metric) const { return panels.count(metric) != 0; }
    // Values at date t; throws when the metric is absent.
    Eigen::VectorXd at(const std::string& metric, int t) const;
    // Fraction of `universe` with a value at t.
    double coverage(const std::string& metric, int t, const std::vector<int>& universe) const;
};

MetricTable load_metrics(const std::string& path, const MarketData& m);

// Factor catalogue. MKT is the equi-weighted long index; LOWVOL/LOWBETA rank
// the internal estimators; the rest rank a metric column.
//   UMD: umd ascending (long winners)      SMB: cap descending (long small)
//   HML: bp  ascending (long value)        EP:  ep ascending    DP: dp ascending
struct FactorDefinition {
    std::string name;
    std::string metric;  // "" for MKT/LOWVOL/LOWBETA
    bool ascending = true;
};

// Returns the definition for `name`, or throws DomainError listing the known names.
FactorDefinition factor_definition(const std::string& name);

// Builds one factor's P&L through the shared pipeline. Metric factors check
// >= 50% pool coverage on every rebalance date. `first_day`/`last_day` as in
// run_strategy.
StrategyRun build_factor(const FactorDefinition& def, const MarketData& m,
                         const ReturnPanel& total_panel, const RiskFreeCurve& rates,
                         const RollingEstimators& est, const StrategyConfig& base_cfg,
                         const MetricTable* metrics, int first_day = -1,
                         int last_day = -1);

// ---- monthly aggregation and correlation ---------------------------------------

// Sums daily P&L into calendar months fully covered by [first, last].
struct MonthlySeries {
    std::vector<int> month_keys; // yyyymm
    Eigen::VectorXd values;
};
MonthlySeries monthly_sums(const PnlSeries& pnl, const MarketData& m);

struct CorrelationTable {
    std::vector<std::string> names;
    Eigen::MatrixXd corr;
    int n_months = 0;
};

// Pearson correlation of monthly sums over the months common to all series
// (common sample keeps the table positive semidefinite). Needs >= 24 months.
CorrelationTable pnl_correlation(const std::vector<std::pair<std::string, MonthlySeries>>& series);

// ---- residualization --------------------------------------------------------------

struct ResidualReport {
    std::vector<std::string> regressor_names;
    Eigen::VectorXd coefficients; // slope per regressor
    double intercept = 0.0;       // monthly alpha, reported separately
    MonthlySeries residual;       // target - intercept - sum(coef * regressor)
    double residual_sharpe = 0.0; // annualized from monthly values
    Eigen::VectorXd residual_regressor_corr;
    int window_months = 0;        // 0 = full-sample coefficients
};

// OLS of the target's monthly P&L on the regressors'. The intercept enters
// the fit and is removed from the residual along with the slopes, so the
// cumulative residual of a fully explained target plots flat; the alpha it
// absorbed is reported on its own. Optional rolling mode re-estimates
// coefficients on a trailing window of `rolling_months` (>= 24). Collinear
// regressors are an error naming the worst pair. Empty regressor set returns
// the target unchanged.
ResidualReport residualize(const MonthlySeries& target,
                           const std::vector<std::pair<std::string, MonthlySeries>>& regressors,
                           int rolling_months = 0);

// ---- holdings bias -----------------------------------------------------------------

enum class HoldingsNormalization { by_market_cap, by_fund_total };

struct HoldingsBiasReport {
    std::vector<int> sample_days; // calendar indices of the holdings snapshots
    // signal name -> per-sample cross-sectional correlation (raw and 1-year
    // running average).
    std::map<std::string, std::vector<double>> correlation;
    std::map<std::string, std::vector<double>> smoothed;
};

// Correlates aggregated fund positions with signal cross-sections per sample
// date. by_market_cap divides the aggregate dollars by the cap metric
// (missing cap = error); by_fund_total averages fund weight vectors.
HoldingsBiasReport holdings_bias(
    const std::string& holdings_file, const MarketData& m,
    const std::map<std::string, std::function<Eigen::VectorXd(int)>>& signals,
    const MetricTable* metrics, HoldingsNormalization normalization);

// ---- dividend-yield deciles ----------------------------------------------------------

struct DyDecileReport {
    std::array<double, 10> beta{};   // decile 0 = lowest yield
    std::array<double, 10> avg_dy{};
    double hml_index_correlation = 0.0; // top-yield minus bottom-yield vs index
};

// Trailing 252-day dividend sum divided by close; NaN while the window is
// short or the instrument lacks a price.
Eigen::VectorXd trailing_yield_at(const MarketData& m, int t);

// Monthly DY deciles (equal weight, long only); beta of each decile's daily
// return on the equi-weighted index over the full sample.
DyDecileReport dy_decile_betas(const MarketData& m, const ReturnPanel& total_panel,
                               const std::function<Eigen::VectorXd(int)>& dy_at,
                               int first_day);

} // namespace lowvol
