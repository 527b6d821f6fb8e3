// One-factor Monte-Carlo market generator.
//
// Daily returns follow r_i(t) = m_i + sigma_d_i (sqrt(rho0) eta_t +
// sqrt(1-rho0) xi_it): every pair of stocks has correlation exactly rho0 in
// expectation, the implied market beta is sigma_i / sigma_av, the factor
// variance is rho0 sigma_av^2 and the idiosyncratic variance sigma_i^2
// (1 - rho0).
//
// With mean_reversion kappa > 0 the same innovations drive an
// Ornstein-Uhlenbeck log-price, X(t) = e^-k X(t-1) + s z(t) with s scaled so
// daily increments keep variance sigma_d^2 (and, by joint stationarity, exact
// cross-correlation rho0). Serial dependence is what makes multi-horizon
// compounding ratios move; i.i.d. returns provably keep them flat.
//
// Dividends are quarterly lumps targeting a planted per-stock annual yield
// whose cross-sectional correlation with sigma equals dy_link exactly
// (in-sample orthogonalized plant); infeasible targets are rejected.
#pragma once

#include "lowvol/data_core.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace lowvol {

struct MarketSpec {
    int n_instruments = 500;
    int n_days = 1260;
    double rho0 = 0.30;

    // Cross-sectional volatility distribution. "inverse_gamma": sigma ~
    // InvGamma(sigma_shape) scaled to mean sigma_mean (shape must exceed 4 so
    // y = 1/sigma has finite fourth moments). "two_point": the more volatile
    // half of the pool gets sigma_high, the rest sigma_low.
    std::string sigma_mode = "inverse_gamma";
    double sigma_shape = 10.0;
    double sigma_mean = 0.30;
    double sigma_high = 0.60;
    double sigma_low = 0.15;

    // Dividend planting: target corr(DY, sigma), mean yield and spread.
    double dy_link = 0.0;
    double dy_mean = 0.03;
    double dy_spread = 0.007;

    // Annual arithmetic ex-dividend drift per true-sigma decile
    // (index 0 = most volatile tenth). Size 1 = same drift everywhere.
    std::vector<double> decile_drifts = {0.06};

    double mean_reversion = 0.0;  // OU kappa on log-price; 0 = i.i.d. returns
    double down_beta_scale = 1.0; // market-loading multiplier on eta<0 days
    int student_t_df = 0;         // 0 = gaussian innovations

    double annual_rate = 0.0;     // flat financing rate for rates.csv
    int sector_count = 10;
    std::uint64_t seed = 42;
    Date start_date{2000, 1, 3};
    std::string pool_name = "SYNTH";
};

// Planted ground truth, kept out of MarketData so downstream code cannot
// accidentally peek; tests and oracles use it explicitly.
struct SyntheticTruth {
    Eigen::VectorXd sigma;   // true annualized volatility
    Eigen::VectorXd dy;      // planted annual dividend yield
    Eigen::VectorXd shares;  // share count (capitalization proxy multiplier)
    Eigen::VectorXd bp_base; // book-to-price level per instrument
    Eigen::VectorXd ep_base; // earnings-to-price level per instrument
    std::vector<int> sigma_decile; // 0..9, 0 = most volatile
};

// Deterministic per seed; instruments draw from private substreams, so the
// result is independent of any parallel evaluation order.
MarketData generate(const MarketSpec& spec, SyntheticTruth* truth = nullptr);

RiskFreeCurve flat_rates(const MarketData& m, double annual_rate);

// Monthly fundamentals snapshot in the generic long form
// (date,instrument,metric,value): dp (trailing realized yield), umd (12-1
// month total return), cap (close * shares), bp, ep.
void write_metrics_csv(const MarketData& m, const SyntheticTruth& truth,
                       const std::string& path);

// Closed-form oracles for the constant-rho0 one-factor world.
Eigen::VectorXd oracle_beta(const Eigen::VectorXd& sigma_sample);
Eigen::VectorXd oracle_idio_var(const Eigen::VectorXd& sigma_sample, double rho0);

// splitmix64: substream derivation for the generator and anything else that
// needs decorrelated child seeds.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream);

} // namespace lowvol
