// Daily strategy pipeline: lagged estimators -> cross-sectional rank signal
// -> Markowitz construction -> market-mode projection -> accounting.
//
// The correlation eigenpair is refreshed every `corr_refresh` trading days
// (refresh dates are deterministic from the first tradable day, so truncating
// future data never shifts the schedule); between refreshes the model is
// restricted to the current membership, which keeps the spike algebra exact
// on the subset.
#pragma once

#include "lowvol/backtest.hpp"

#include <functional>

namespace lowvol {

enum class StrategyKind { lowvol, lowbeta, sector_lowvol, metric };

struct StrategyConfig {
    StrategyKind kind = StrategyKind::lowvol;
    EstimatorWindows windows;
    double target_risk = 1.0;
    CorrelationModel::Mode corr_mode = CorrelationModel::Mode::spike;
    double dividend_tax = 0.0;
    // kind == metric only: per-date metric values (NaN = no value) and the
    // rank direction (true: higher metric -> longer).
    std::function<Eigen::VectorXd(int)> metric_at;
    bool metric_ascending = true;
    std::string metric_name;
};

struct DiagnosticsRow {
    int date_index = -1;
    double nmv = 0.0, gmv = 0.0;
    double market_exposure_pre = 0.0, market_exposure_post = 0.0;
    double lambda0 = 0.0;
    double v0_flat_overlap = 0.0; // |<v0, flat>|, reported, never asserted
    int n_active = 0;
};

struct StrategyRun {
    std::vector<PositionVector> positions;
    PnlSeries pnl;
    std::vector<DiagnosticsRow> diagnostics;
};

// Restriction of a correlation model to a membership subset. For the spike
// mode this is exact: the submatrix of eps2 I + (lambda0 - eps2) v0 v0^T is
// again a spike matrix with lambda0' = eps2 + (lambda0 - eps2) |v0_sub|^2 and
// the bulk unchanged. Returns the model untouched when nothing is dropped.
CorrelationModel restrict_model(const CorrelationModel& corr,
                                const std::vector<int>& members_sorted);

// Runs the full pipeline over every tradable day. `first_day`, when >= 0,
// overrides the default start (the day the correlation window first fills).
StrategyRun run_strategy(const MarketData& m, const ReturnPanel& total_panel,
                         const RiskFreeCurve& rates, const RollingEstimators& est,
                         const StrategyConfig& cfg, int first_day = -1,
                         int last_day = -1);

} // namespace lowvol
