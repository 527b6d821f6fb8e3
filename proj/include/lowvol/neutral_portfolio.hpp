// Markowitz position construction under a correlation model, market-mode
// projection, and closed-form diagnostics for the one-spike world.
//
// With scores p, volatilities sigma and correlation C, the unconstrained
// mean-variance solution is
//   x_i = (1 / 2 mu sigma_i) sum_j Cinv_ij (p_j / sigma_j),
// and 2 mu is fixed by the risk target: sqrt(x' S C S x) = R (S = diag sigma).
// The Lagrange constant mu is never exposed; callers supply R.
//
// Market neutrality is exact orthogonalization in risk space: with
// w_i = x_i sigma_i, the projected solution is w - (v0.w) v0, and the market
// risk exposure is R0 = sqrt(lambda0) * (v0.w).
#pragma once

#include "lowvol/estimators.hpp"

#include <Eigen/Dense>

namespace lowvol {

struct PositionVector {
    int date_index = -1;
    Eigen::VectorXd x;        // dollars per instrument, full-universe size, 0 outside the active set
    double nmv = 0.0;         // sum x_i
    double gmv = 0.0;         // sum |x_i|
    double market_exposure = 0.0; // R0 of this position set
    double target_risk = 0.0;
};

// Cross-sectional moments of y = 1/sigma used by the closed forms.
struct SpikeMoments {
    double m1 = 0, m2 = 0, m3 = 0, m4 = 0;
    double mabs = 0; // <y |y^2 - <y^2>|>
};

SpikeMoments spike_moments(const Eigen::VectorXd& sigma);

// Positions over corr.included: entries of `scores`/`sigma` are indexed by
// the full universe; instruments outside corr.included get x = 0, instruments
// inside it participate even with score 0 (they can carry hedge weight).
// Requires R > 0 and finite sigma > 0 on the active set.
PositionVector markowitz_positions(const SignalVector& scores,
                                   const Eigen::VectorXd& sigma,
                                   const CorrelationModel& corr,
                                   double target_risk);

// Removes the market-mode component in risk space; other eigen-exposures are
// untouched and no re-scaling is applied. Idempotent.
PositionVector project_market_mode(const PositionVector& pos,
                                   const CorrelationModel& corr,
                                   const Eigen::VectorXd& sigma);

// R0 = sqrt(lambda0) sum_i x_i sigma_i v0_i.
double market_risk_exposure(const PositionVector& pos,
                            const CorrelationModel& corr,
                            const Eigen::VectorXd& sigma);

// Net-over-gross ratio of the 1/sigma-predictor Markowitz portfolio in the
// flat-spike limit: (<y^3> - <y><y^2>) / <y |y^2 - <y^2>|>. NaN when sigma is
// degenerate (all equal: 0/0).
double closed_form_ratio(const SpikeMoments& mo);

// Market-mode risk exposure of the same portfolio before projection:
//   R0 ~= R <y^2> / sqrt(lambda0 (1 - lambda0/N) (<y^4> - <y^2>^2)).
// Guards lambda0 > 0.95 N (the formula blows up as lambda0 -> N).
double closed_form_market_exposure(const SpikeMoments& mo, double target_risk,
                                   double lambda0, int n);

} // namespace lowvol
