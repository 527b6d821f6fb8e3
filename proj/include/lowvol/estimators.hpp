// Rolling risk estimators and cross-sectional rank signals.
//
// Conventions, used everywhere downstream:
//  - volatility at date t: sample std of the `vol_window` daily total returns
//    ending at t - lag, annualized by sqrt(252);
//  - beta at date t: slope of the instrument's overlapping `beta_block`-day
//    compounded returns on the index's, over `beta_window` such returns
//    ending at t - lag; the index is the equi-weighted mean of the pool
//    members' daily returns;
//  - correlation at date t: estimated from the `corr_window` days ending at t
//    (the lag protects the signals; the correlation matrix is risk plumbing).
#pragma once

#include "lowvol/data_core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <vector>

namespace lowvol {

struct EstimatorWindows {
    int vol_window = 100;   // days of daily returns in the sigma estimate
    int beta_window = 100;  // number of overlapping block returns in the beta
    int beta_block = 3;     // days per compounded block return
    int lag = 20;           // trading days between data end and signal date
    int corr_window = 1008; // 4 years of daily returns
    int corr_refresh = 21;  // trading days between eigenpair refreshes
    double min_coverage = 0.6; // fraction of real observations required in corr window
};

// Cross-sectional scores in [-1, 1], zero-sum by midrank construction.
// Entries with valid == 0 carry score 0 and must be ignored downstream.
struct SignalVector {
    Eigen::VectorXd score;
    std::vector<unsigned char> valid;
};

// Midrank signal: rank entries ascending in `values` (descending when
// ascending == false), ties get average ranks, then
//   s_i = (2 rank_i - (n+1)) / (n-1).
// Requires >= 2 valid entries; all-equal input yields all-zero scores.
// Invariant under strictly monotone transforms of the input.
SignalVector rank_signal(const Eigen::VectorXd& values,
                         const std::vector<unsigned char>& valid,
                         bool ascending);

// rank_signal applied independently within each sector; sectors with a single
// valid member get score 0. The global sum stays 0 (each sector sums to 0).
SignalVector sector_rank_signal(const Eigen::VectorXd& values,
                                const std::vector<unsigned char>& valid,
                                const std::vector<std::string>& sectors,
                                bool ascending);

// One-spike correlation model: C = lambda0 P0 + eps2 (I - P0) with
// P0 = v0 v0^T and the trace-preserving bulk eps2 = (n - lambda0)/(n - 1),
// or a raw dense empirical matrix. The spike inverse is the exact
//   C^-1 = (1/lambda0) P0 + (1/eps2)(I - P0).
struct CorrelationModel {
    enum class Mode { spike, dense };

    Mode mode = Mode::spike;
    int date_index = -1;        // calendar index the estimation window ends at
    std::vector<int> included;  // instrument indices covered by the model
    double lambda0 = 0.0;
    double eps2 = 0.0;
    Eigen::VectorXd v0;         // leading eigenvector, unit norm, sum >= 0
    Eigen::MatrixXd C;          // dense mode only
    Eigen::LDLT<Eigen::MatrixXd> factorization; // dense mode only

    int n() const { return static_cast<int>(included.size()); }

    // x = C^-1 q over the included set.
    Eigen::VectorXd apply_inverse(const Eigen::VectorXd& q) const;
    // w^T C w over the included set.
    double quadratic_form(const Eigen::VectorXd& w) const;

    // Materializations for tests and diagnostics (spike mode).
    Eigen::MatrixXd dense_matrix() const;
    Eigen::MatrixXd dense_inverse() const;
};

// Builds the spike model directly from a leading eigenpair (v0 is normalized,
// sign-fixed so its sum is >= 0). Rejects lambda0 outside (0, 0.95 n].
CorrelationModel make_spike_model(double lambda0, Eigen::VectorXd v0,
                                  std::vector<int> included = {});

// Estimates the correlation model from the window ending at t over the pool
// members at t with at least `min_coverage` real observations. Spike mode
// extracts the leading eigenpair by power iteration on the standardized
// return matrix (never materializing C); dense mode requires more
// observations than instruments and errors on singularity.
CorrelationModel estimate_correlation(const ReturnPanel& panel, const MarketData& m,
                                      int t, const EstimatorWindows& w,
                                      CorrelationModel::Mode mode);

// Per-date sigma/beta with shared precomputation (index series, block
// returns). Invalid estimates are NaN; callers treat NaN as "excluded".
class RollingEstimators {
public:
    RollingEstimators(const ReturnPanel& total_panel, const MarketData& m,
                      EstimatorWindows w);

    // Annualized sigma per instrument at signal date t; NaN when the window
    // is incomplete or the sample std is zero.
    Eigen::VectorXd sigma_at(int t) const;

    // Beta per instrument at signal date t; NaN when incomplete. Throws
    // DomainError when the index block-return variance is zero.
    Eigen::VectorXd beta_at(int t) const;

    // Equi-weighted mean of members' returns on day t (NaN if undefined).
    double index_return(int t) const { return index_r_[t]; }

    const EstimatorWindows& windows() const { return w_; }

private:
    const ReturnPanel& panel_;
    const MarketData& market_;
    EstimatorWindows w_;
    std::vector<double> index_r_;          // T
    Eigen::MatrixXd block_r_;              // T x N, NaN where undefined
    std::vector<double> index_block_r_;    // T
};

namespace testhooks {
// Added to the spike-inverse bulk coefficient; exists so the verification
// suite can prove it detects a corrupted inverse. Always 0 in normal runs.
extern double spike_bulk_perturb;
} // namespace testhooks

} // namespace lowvol
