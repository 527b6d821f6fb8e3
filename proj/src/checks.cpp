#include "lowvol/checks.hpp"

#include "lowvol/backtest.hpp"
#include "lowvol/csv.hpp"
#include "lowvol/errors.hpp"
#include "lowvol/estimators.hpp"
#include "lowvol/factor_lab.hpp"
#include "lowvol/neutral_portfolio.hpp"
#include "lowvol/strategy.hpp"
#include "lowvol/synthetic_market.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

namespace lowvol::checks {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Timer {
    Clock::time_point start = Clock::now();
    double elapsed() const {
        return std::chrono::duration<double>(Clock::now() - start).count();
    }
};

CheckResult finish(const std::string& id, const std::string& name, bool pass,
                   const Timer& timer, const std::ostringstream& detail) {
    CheckResult r;
    r.id = id;
    r.name = name;
    r.pass = pass;
    r.seconds = timer.elapsed();
    r.detail = detail.str();
    return r;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd da = a.array() - a.mean();
    Eigen::VectorXd db = b.array() - b.mean();
    double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
    return denom == 0.0 ? std::numeric_limits<double>::quiet_NaN() : da.dot(db) / denom;
}

// Least-squares line y = slope x + intercept.
std::pair<double, double> fit_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    double mx = x.mean(), my = y.mean();
    double sxx = (x.array() - mx).square().sum();
    double sxy = ((x.array() - mx) * (y.array() - my)).sum();
    double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

Eigen::VectorXd inverse_gamma_sigmas(int n, double shape, double mean,
                                     std::mt19937_64& rng) {
    std::gamma_distribution<double> gamma(shape, 1.0);
    const double scale = mean * (shape - 1.0);
    Eigen::VectorXd sigma(n);
    for (int i = 0; i < n; ++i) sigma[i] = scale / gamma(rng);
    return sigma;
}

double monthly_sharpe(const MonthlySeries& ms) {
    const long n = ms.values.size();
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    double mean = ms.values.mean();
    double sd = std::sqrt((ms.values.array() - mean).square().sum() / double(n - 1));
    return sd == 0.0 ? 0.0 : mean / sd * std::sqrt(12.0);
}

} // namespace

// ---- A1: exact spike inverse vs dense inversion -----------------------------------

CheckResult a1_spike_inverse() {
    Timer timer;
    std::ostringstream detail;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss(0.0, 1.0);

    double max_err = 0.0;
    for (int n : {50, 200}) {
        for (double frac : {0.2, 0.5}) {
            Eigen::VectorXd v0(n);
            for (int i = 0; i < n; ++i) v0[i] = gauss(rng);
            v0 += Eigen::VectorXd::Constant(n, 2.0 / std::sqrt(double(n)));
            v0.normalize();
            CorrelationModel corr = make_spike_model(frac * n, v0);

            Eigen::MatrixXd dense_inv = corr.dense_matrix().inverse();
            for (int j = 0; j < n; ++j) {
                Eigen::VectorXd col = corr.apply_inverse(Eigen::VectorXd::Unit(n, j));
                max_err = std::max(max_err, (col - dense_inv.col(j)).cwiseAbs().maxCoeff());
            }
        }
    }

    bool pass = max_err <= 1e-10 && timer.elapsed() < 1.0;
    detail << "max |closed-form - dense| = " << std::scientific << std::setprecision(2)
           << max_err << " (tol 1e-10, budget 1s)";
    return finish("A1", "one-spike inverse vs dense inversion", pass, timer, detail);
}

// ---- A2: net-over-gross closed form ------------------------------------------------

CheckResult a2_net_gross_ratio() {
    Timer timer;
    std::ostringstream detail;

    const int n = 500;
    const int draws = 200;
    const MarketSpec defaults; // volatility-distribution calibration lives here
    const double shape = defaults.sigma_shape;
    const double lambda0 = 0.3 * n;

    std::mt19937_64 rng(11);
    Eigen::VectorXd flat = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(double(n)));
    CorrelationModel corr = make_spike_model(lambda0, flat);

    double max_gap = 0.0, ratio_sum = 0.0;
    for (int d = 0; d < draws; ++d) {
        Eigen::VectorXd sigma = inverse_gamma_sigmas(n, shape, 0.30, rng);

        SignalVector scores;
        scores.score = sigma.cwiseInverse();
        scores.valid.assign(size_t(n), 1);

        PositionVector pos = markowitz_positions(scores, sigma, corr, 1.0);
        double sample = pos.nmv / pos.gmv;
        double closed = closed_form_ratio(spike_moments(sigma));

        max_gap = std::max(max_gap, std::abs(sample - closed));
        ratio_sum += sample;
    }
    double mean_ratio = ratio_sum / draws;

    bool pass = max_gap <= 0.05 && mean_ratio >= 0.25 && mean_ratio <= 0.45 &&
                timer.elapsed() < 30.0;
    detail << std::fixed << std::setprecision(4) << "mean NMV/GMV = " << mean_ratio
           << " (band [0.25, 0.45]), max |sample - closed| = " << max_gap
           << " (tol 0.05), sigma shape = " << std::setprecision(1) << shape;
    return finish("A2", "net-over-gross closed form", pass, timer, detail);
}

// ---- A3: generator beta / factor-variance / idiosyncratic oracles ------------------

namespace {

MarketSpec quiet_market(int n, int days, std::uint64_t seed) {
    MarketSpec s;
    s.n_instruments = n;
    s.n_days = days;
    s.seed = seed;
    s.dy_mean = 0.0; // no dividends unless a check opts in
    s.dy_spread = 0.0;
    return s;
}

} // namespace

CheckResult a3_beta_oracle() {
    Timer timer;
    std::ostringstream detail;

    MarketSpec spec = quiet_market(500, 5000, 42);
    spec.rho0 = 0.30;
    SyntheticTruth truth;
    MarketData m = generate(spec, &truth);
    ReturnPanel panel = compute_returns(m, ReturnMode::total);

    const int T = m.days(), N = m.instruments();
    Eigen::MatrixXd r = panel.r.bottomRows(T - 1); // t = 1.. all real
    Eigen::VectorXd index = r.rowwise().mean();

    // Full-sample beta per instrument against the equi-weighted index.
    Eigen::VectorXd index_c = index.array() - index.mean();
    double index_var = index_c.squaredNorm();
    Eigen::VectorXd beta_hat(N);
    for (int i = 0; i < N; ++i) {
        Eigen::VectorXd ri = r.col(i).array() - r.col(i).mean();
        beta_hat[i] = ri.dot(index_c) / index_var;
    }
    Eigen::VectorXd beta_oracle = oracle_beta(truth.sigma);
    auto [slope, intercept] = fit_line(beta_oracle, beta_hat);

    // Factor series recovered by cross-sectional regression on the oracle betas.
    Eigen::VectorXd phi = r * beta_oracle / beta_oracle.squaredNorm();
    double phi_var = (phi.array() - phi.mean()).square().sum() / double(phi.size() - 1);
    double sigma_av = truth.sigma.mean();
    double phi_ratio = phi_var * 252.0 / (spec.rho0 * sigma_av * sigma_av);

    // Idiosyncratic variance against sigma_i^2 (1 - rho0), cross-sectional mean.
    Eigen::VectorXd idio_oracle = oracle_idio_var(truth.sigma, spec.rho0);
    double ratio_sum = 0.0;
    for (int i = 0; i < N; ++i) {
        Eigen::VectorXd resid = r.col(i) - beta_oracle[i] * phi;
        double v = (resid.array() - resid.mean()).square().sum() / double(resid.size() - 1);
        ratio_sum += v * 252.0 / idio_oracle[i];
    }
    double idio_ratio = ratio_sum / N;

    bool pass = std::abs(slope - 1.0) <= 0.05 && std::abs(intercept) <= 0.05 &&
                std::abs(phi_ratio - 1.0) <= 0.02 && std::abs(idio_ratio - 1.0) <= 0.02 &&
                timer.elapsed() < 60.0;
    detail << std::fixed << std::setprecision(4) << "beta slope = " << slope
           << " (1 +- 0.05), intercept = " << intercept
           << " (0 +- 0.05), factor-var ratio = " << phi_ratio
           << ", idio-var ratio = " << idio_ratio << " (both 1 +- 0.02)";
    return finish("A3", "one-factor generator oracles", pass, timer, detail);
}

// ---- A4: low-vol vs low-beta monthly correlation ------------------------------------

CheckResult a4_strategy_pair_correlation() {
    Timer timer;
    std::ostringstream detail;

    double min_corr = 1.0;
    const int seeds = 10;
    for (int s = 0; s < seeds; ++s) {
        MarketSpec spec = quiet_market(500, 5000, 1 + std::uint64_t(s));
        spec.rho0 = 0.30;
        MarketData m = generate(spec);
        ReturnPanel panel = compute_returns(m, ReturnMode::total);
        RiskFreeCurve rates = flat_rates(m, 0.0);
        RollingEstimators est(panel, m, EstimatorWindows{});

        StrategyConfig cfg;
        cfg.kind = StrategyKind::lowvol;
        StrategyRun lowvol = run_strategy(m, panel, rates, est, cfg);
        cfg.kind = StrategyKind::lowbeta;
        StrategyRun lowbeta = run_strategy(m, panel, rates, est, cfg);

        CorrelationTable table = pnl_correlation(
            {{"LOWVOL", monthly_sums(lowvol.pnl, m)}, {"LOWBETA", monthly_sums(lowbeta.pnl, m)}});
        min_corr = std::min(min_corr, table.corr(0, 1));
    }

    bool pass = min_corr > 0.8 && timer.elapsed() < 300.0;
    detail << std::fixed << std::setprecision(4) << "min monthly corr over " << seeds
           << " seeds = " << min_corr << " (> 0.8, budget 300s)";
    return finish("A4", "low-vol vs low-beta correlation", pass, timer, detail);
}

// ---- A5: accounting identities and causality ----------------------------------------

CheckResult a5_accounting_identities() {
    Timer timer;
    std::ostringstream detail;

    MarketSpec spec = quiet_market(100, 2000, 5);
    spec.dy_mean = 0.03;
    spec.dy_spread = 0.007;
    spec.dy_link = -0.2;
    spec.annual_rate = 0.02;
    SyntheticTruth truth;
    MarketData m = generate(spec, &truth);
    ReturnPanel panel = compute_returns(m, ReturnMode::total);
    RiskFreeCurve rates = flat_rates(m, spec.annual_rate);
    RollingEstimators est(panel, m, EstimatorWindows{});

    StrategyConfig cfg;
    cfg.dividend_tax = 0.30; // exercise the tax path in the identity
    StrategyRun base = run_strategy(m, panel, rates, est, cfg);

    // Leg identity, recomputed in one fused pass (different rounding order
    // than the per-leg accumulation inside the engine).
    double max_leg_err = 0.0;
    for (const auto& pos : base.positions) {
        const int t = pos.date_index;
        const double rf = rates.daily(t + 1);
        double total = 0.0;
        for (int i = 0; i < m.instruments(); ++i) {
            const double x = pos.x[i];
            if (x == 0.0) continue;
            const double scale = x > 0.0 ? 1.0 - cfg.dividend_tax : 1.0;
            total += x * ((m.close(t + 1, i) + m.dividend(t + 1, i) * scale) /
                              m.close(t, i) - 1.0 - rf);
        }
        max_leg_err = std::max(max_leg_err, std::abs(total - base.pnl.total[t + 1]));
    }

    // Market-mode projection must reduce the market risk exposure by >= 8 digits.
    double max_proj_ratio = 0.0;
    for (const auto& row : base.diagnostics)
        if (std::abs(row.market_exposure_pre) > 1e-300)
            max_proj_ratio = std::max(
                max_proj_ratio,
                std::abs(row.market_exposure_post) / std::abs(row.market_exposure_pre));

    // Causality: rescale every close after the cutoff; positions on or before
    // the cutoff must not move by a single bit.
    const int cutoff = m.days() - 2 - 300;
    MarketData perturbed = m;
    for (int t = cutoff + 1; t < m.days(); ++t) perturbed.close.row(t) *= 1.5;
    ReturnPanel panel_p = compute_returns(perturbed, ReturnMode::total);
    RollingEstimators est_p(panel_p, perturbed, EstimatorWindows{});
    StrategyRun trunc = run_strategy(perturbed, panel_p, rates, est_p, cfg, -1, cutoff);

    bool causal = true;
    {
        std::map<int, const PositionVector*> base_by_day;
        for (const auto& p : base.positions) base_by_day[p.date_index] = &p;
        for (const auto& p : trunc.positions) {
            auto it = base_by_day.find(p.date_index);
            if (it == base_by_day.end() || p.x.size() != it->second->x.size() ||
                !(p.x.array() == it->second->x.array()).all()) {
                causal = false;
                break;
            }
        }
        causal = causal && trunc.positions.size() == base_by_day.size() -
                               size_t(m.days() - 2 - cutoff);
    }

    bool pass = max_leg_err <= 1e-12 && max_proj_ratio <= 1e-8 && causal;
    detail << std::scientific << std::setprecision(2) << "max leg-identity gap = "
           << max_leg_err << " (tol 1e-12), max projection ratio = " << max_proj_ratio
           << " (tol 1e-8), future-perturbation positions identical = "
           << (causal ? "yes" : "NO");
    return finish("A5", "accounting identities and causality", pass, timer, detail);
}

// ---- A6: compounding primitives and horizon decay ------------------------------------

CheckResult a6_compounding() {
    Timer timer;
    std::ostringstream detail;

    const bool exact_ok = std::abs(compound(-0.20, 0.20) - (-0.04)) <= 1e-12 &&
                          recoup(-0.20) == 0.25;

    // Path inequality: compounded growth never beats the same-mean constant path.
    bool amgm_ok = true;
    {
        std::mt19937_64 rng(99);
        std::uniform_real_distribution<double> uni(-0.5, 0.5);
        for (int p = 0; p < 10000 && amgm_ok; ++p) {
            double prod = 1.0, sum = 0.0;
            const int len = 12;
            for (int k = 0; k < len; ++k) {
                double r = uni(rng);
                prod *= 1.0 + r;
                sum += r;
            }
            double bound = std::pow(1.0 + sum / len, len);
            amgm_ok = prod <= bound * (1.0 + 1e-12) + 1e-300;
        }
    }

    // Horizon decay needs serial dependence; i.i.d. returns keep the ratio
    // flat, so the market uses mean-reverting log prices with equal drifts.
    const std::vector<int> horizons{5, 10, 20, 40};
    int monotone = 0;
    const int seeds = 20;
    std::vector<double> ratio_mean(horizons.size(), 0.0);
    for (int s = 0; s < seeds; ++s) {
        MarketSpec spec = quiet_market(1000, 5040, 301 + std::uint64_t(s));
        spec.sigma_mode = "two_point";
        spec.sigma_high = 1.00;
        spec.sigma_low = 0.15;
        spec.rho0 = 0.01;
        spec.mean_reversion = 0.30;
        spec.decile_drifts = {0.30};
        MarketData m = generate(spec);
        ReturnPanel price = compute_returns(m, ReturnMode::price);
        RollingEstimators est(price, m, EstimatorWindows{});
        CompoundingReport rep = compounding_ratio(est, price, m, horizons);

        bool mono = true;
        for (size_t h = 0; h + 1 < rep.ratio.size(); ++h)
            mono = mono && std::isfinite(rep.ratio[h]) && std::isfinite(rep.ratio[h + 1]) &&
                   rep.ratio[h] > rep.ratio[h + 1];
        monotone += mono ? 1 : 0;
        for (size_t h = 0; h < rep.ratio.size(); ++h) ratio_mean[h] += rep.ratio[h] / seeds;
    }

    bool pass = exact_ok && amgm_ok && monotone >= 18;
    detail << std::fixed << std::setprecision(3) << "primitives "
           << (exact_ok ? "ok" : "BAD") << ", path inequality "
           << (amgm_ok ? "ok" : "BAD") << ", monotone seeds " << monotone << "/" << seeds
           << " (>= 18), mean ratios";
    for (double v : ratio_mean) detail << ' ' << v;
    return finish("A6", "compounding primitives and horizon decay", pass, timer, detail);
}

// ---- A7: planted dividend-yield mechanism ---------------------------------------------

CheckResult a7_planted_yield_mechanism() {
    Timer timer;
    std::ostringstream detail;

    const int seeds = 20;
    int economic_ok = 0;
    double corr_sum = 0.0;
    std::array<double, 10> beta_sum{};
    for (int s = 0; s < seeds; ++s) {
        MarketSpec spec = quiet_market(500, 2520, 100 + std::uint64_t(s));
        spec.rho0 = 0.30;
        spec.dy_mean = 0.04;
        spec.dy_spread = 0.007;
        spec.dy_link = -0.2;
        spec.decile_drifts = {0.04};
        MarketData m = generate(spec);
        ReturnPanel panel = compute_returns(m, ReturnMode::total);
        RiskFreeCurve rates = flat_rates(m, 0.0);
        RollingEstimators est(panel, m, EstimatorWindows{});

        // Yield recovered from the paid dividends at the last ex-date before
        // t*, annualized; correlated against the lagged-window sigma estimate.
        const int t_star = 1500;
        int ex_date = -1;
        for (int t = t_star; t > 252; --t)
            if (m.dividend.row(t).sum() > 0.0) { ex_date = t; break; }
        if (ex_date < 0) throw DomainError("no ex-dividend date before the sample day");
        Eigen::VectorXd sig = est.sigma_at(ex_date);
        std::vector<double> xs, ys;
        for (int i = 0; i < m.instruments(); ++i) {
            if (!std::isfinite(sig[i]) || m.dividend(ex_date, i) <= 0.0) continue;
            xs.push_back(4.0 * m.dividend(ex_date, i) / m.close(ex_date, i));
            ys.push_back(sig[i]);
        }
        Eigen::Map<Eigen::VectorXd> vx(xs.data(), long(xs.size()));
        Eigen::Map<Eigen::VectorXd> vy(ys.data(), long(ys.size()));
        corr_sum += pearson(vx, vy);

        StrategyConfig cfg;
        StrategyRun run = run_strategy(m, panel, rates, est, cfg);
        double sharpe = strategy_stats(run.pnl).financed.sharpe;
        double attribution = dividend_attribution(run.pnl).financed;
        if (sharpe > 0.0 && attribution > 0.3) ++economic_ok;

        DyDecileReport dy = dy_decile_betas(
            m, panel, [&](int t) { return trailing_yield_at(m, t); }, 300);
        for (int d = 0; d < 10; ++d) beta_sum[size_t(d)] += dy.beta[size_t(d)] / seeds;
    }
    double corr_mean = corr_sum / seeds;

    Eigen::VectorXd deciles(10), betas(10);
    for (int d = 0; d < 10; ++d) {
        deciles[d] = d;
        betas[d] = beta_sum[size_t(d)];
    }
    auto [beta_slope, beta_icpt] = fit_line(deciles, betas);
    (void)beta_icpt;

    bool pass = std::abs(corr_mean - (-0.2)) <= 0.03 && economic_ok >= 18 &&
                beta_slope < 0.0;
    detail << std::fixed << std::setprecision(4) << "mean recovered corr(DY, sigma) = "
           << corr_mean << " (-0.2 +- 0.03), Sharpe>0 & dividend share>0.3 in "
           << economic_ok << "/" << seeds << " seeds (>= 18), yield-decile beta slope = "
           << beta_slope << " (< 0)";
    return finish("A7", "planted dividend-yield mechanism", pass, timer, detail);
}

// ---- A8: residualization --------------------------------------------------------------

CheckResult a8_residualization() {
    Timer timer;
    std::ostringstream detail;

    // Coefficients against an independent normal-equations solve.
    double coef_err = 0.0, resid_corr = 0.0;
    {
        std::mt19937_64 rng(23);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const int months = 120, k = 3;
        MonthlySeries target;
        std::vector<std::pair<std::string, MonthlySeries>> regressors(
            {{"F1", {}}, {"F2", {}}, {"F3", {}}});
        Eigen::MatrixXd X(months, k);
        Eigen::VectorXd y(months);
        std::vector<int> keys;
        for (int t = 0; t < months; ++t) keys.push_back(200001 + (t / 12) * 100 + t % 12);
        for (int t = 0; t < months; ++t) {
            for (int j = 0; j < k; ++j) X(t, j) = gauss(rng);
            y[t] = 0.8 + 0.5 * X(t, 0) - 0.3 * X(t, 1) + 0.1 * gauss(rng);
        }
        target.month_keys = keys;
        target.values = y;
        for (int j = 0; j < k; ++j) {
            regressors[size_t(j)].second.month_keys = keys;
            regressors[size_t(j)].second.values = X.col(j);
        }
        ResidualReport rep = residualize(target, regressors);

        Eigen::MatrixXd design(months, k + 1);
        design.col(0).setOnes();
        design.rightCols(k) = X;
        Eigen::VectorXd oracle =
            (design.transpose() * design).ldlt().solve(design.transpose() * y);
        coef_err = std::abs(rep.intercept - oracle[0]);
        for (int j = 0; j < k; ++j)
            coef_err = std::max(coef_err, std::abs(rep.coefficients[j] - oracle[j + 1]));
        resid_corr = rep.residual_regressor_corr.cwiseAbs().maxCoeff();
    }

    // Economic case: a market whose entire edge flows through planted yields.
    MarketSpec spec = quiet_market(300, 10000, 8);
    spec.rho0 = 0.30;
    spec.dy_mean = 0.035;
    spec.dy_spread = 0.012;
    spec.dy_link = -0.8;
    spec.decile_drifts = {0.0};
    SyntheticTruth truth;
    MarketData m = generate(spec, &truth);
    ReturnPanel panel = compute_returns(m, ReturnMode::total);
    RiskFreeCurve rates = flat_rates(m, 0.0);
    RollingEstimators est(panel, m, EstimatorWindows{});

    fs::path metrics_path = fs::temp_directory_path() / "lowvol_check_metrics.csv";
    write_metrics_csv(m, truth, metrics_path.string());
    MetricTable metrics = load_metrics(metrics_path.string(), m);

    StrategyConfig cfg;
    StrategyRun lowvol = run_strategy(m, panel, rates, est, cfg);
    StrategyRun dp = build_factor(factor_definition("DP"), m, panel, rates, est, cfg,
                                  &metrics);

    MonthlySeries lowvol_m = monthly_sums(lowvol.pnl, m);
    MonthlySeries dp_m = monthly_sums(dp.pnl, m);
    double raw_sharpe = monthly_sharpe(lowvol_m);
    ResidualReport rep = residualize(lowvol_m, {{"DP", dp_m}});

    bool pass = coef_err <= 1e-10 && resid_corr <= 1e-10 && raw_sharpe > 0.5 &&
                std::abs(rep.residual_sharpe) < 0.2;
    detail << std::scientific << std::setprecision(2) << "coef vs oracle = " << coef_err
           << ", resid-regressor corr = " << resid_corr << std::fixed
           << std::setprecision(3) << ", raw Sharpe = " << raw_sharpe
           << " (> 0.5), residual Sharpe = " << rep.residual_sharpe << " (|.| < 0.2)";
    return finish("A8", "residualization flattens a planted driver", pass, timer, detail);
}

// ---- A9: signal-lag robustness -----------------------------------------------------------

CheckResult a9_lag_robustness() {
    Timer timer;
    std::ostringstream detail;

    MarketSpec spec = quiet_market(500, 5040, 9);
    spec.rho0 = 0.30;
    spec.dy_mean = 0.035;
    spec.dy_spread = 0.010;
    spec.dy_link = -0.6;
    spec.decile_drifts = {0.04};
    MarketData m = generate(spec);
    ReturnPanel panel = compute_returns(m, ReturnMode::total);
    RiskFreeCurve rates = flat_rates(m, 0.0);

    double sharpe[2] = {0.0, 0.0};
    int k = 0;
    for (int lag : {20, 40}) {
        StrategyConfig cfg;
        cfg.windows.lag = lag;
        RollingEstimators est(panel, m, cfg.windows);
        StrategyRun run = run_strategy(m, panel, rates, est, cfg);
        sharpe[k++] = strategy_stats(run.pnl).financed.sharpe;
    }

    double rel = std::abs(sharpe[1] - sharpe[0]) / std::abs(sharpe[0]);
    bool pass = rel < 0.20;
    detail << std::fixed << std::setprecision(3) << "Sharpe lag20 = " << sharpe[0]
           << ", lag40 = " << sharpe[1] << ", relative change = " << rel << " (< 0.20)";
    return finish("A9", "doubling the signal lag", pass, timer, detail);
}

// ---- A10: bitwise determinism of the CLI ---------------------------------------------------

namespace {

bool read_bytes(const fs::path& p, std::string& out) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return false;
    std::ostringstream buf;
    buf << in.rdbuf();
    out = buf.str();
    return true;
}

// Compares two directories file-by-file (names and bytes).
bool same_tree(const fs::path& a, const fs::path& b, std::string& first_diff) {
    std::error_code ec;
    if (!fs::is_directory(a, ec) || !fs::is_directory(b, ec)) {
        first_diff = "output directory missing";
        return false;
    }
    std::vector<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a));
    std::sort(rel.begin(), rel.end());
    size_t count_b = 0;
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) ++count_b;
    if (count_b != rel.size() || rel.empty()) {
        first_diff = "file sets differ or are empty";
        return false;
    }
    for (const auto& r : rel) {
        std::string bytes_a, bytes_b;
        if (!read_bytes(a / r, bytes_a) || !read_bytes(b / r, bytes_b) ||
            bytes_a != bytes_b) {
            first_diff = r.string();
            return false;
        }
    }
    return true;
}

int run_command(const std::string& cmd) { return std::system(cmd.c_str()); }

} // namespace

CheckResult a10_determinism(const std::string& cli_path) {
    Timer timer;
    std::ostringstream detail;

    fs::path base = fs::temp_directory_path() / "lowvol_check_determinism";
    std::error_code ec;
    fs::remove_all(base, ec);
    fs::create_directories(base);

    nlohmann::json cfg = {
        {"synthetic",
         {{"instruments", 60},
          {"days", 560},
          {"seed", 7},
          {"rho0", 0.3},
          {"dy_mean", 0.03},
          {"dy_spread", 0.005},
          {"dy_link", -0.2},
          {"annual_rate", 0.02}}},
        {"strategy",
         {{"kind", "lowvol"},
          {"windows",
           {{"correlation", 250}, {"volatility", 60}, {"beta", 60}, {"lag", 10}}}}}};
    fs::path cfg_path = base / "config.json";
    write_file_atomic(cfg_path.string(), cfg.dump(2) + "\n");

    bool pass = true;
    std::string why;
    for (const std::string sub : {"backtest", "simulate"}) {
        // Both runs use the same --out path (the first tree is moved aside),
        // so every artifact -- including the echoed effective config, which
        // records that path -- must match byte for byte.
        fs::path out = base / (sub + "_out");
        fs::path first = base / (sub + "_first");
        for (int round = 0; round < 2 && pass; ++round) {
            std::string cmd = "\"" + cli_path + "\" " + sub + " --config \"" +
                              cfg_path.string() + "\" --out \"" + out.string() +
                              "\" > \"" + (base / (sub + ".log")).string() + "\" 2>&1";
            if (run_command(cmd) != 0) {
                pass = false;
                why = sub + " exited nonzero";
            } else if (round == 0) {
                fs::rename(out, first, ec);
                if (ec) {
                    pass = false;
                    why = sub + ": could not stash first run (" + ec.message() + ")";
                }
            }
        }
        std::string diff;
        if (pass && !same_tree(first, out, diff)) {
            pass = false;
            why = sub + ": " + diff + " differs";
        }
        if (!pass) break;
    }

    detail << (pass ? "backtest and simulate outputs byte-identical across re-runs"
                    : "NOT deterministic: " + why);
    return finish("A10", "re-run determinism", pass, timer, detail);
}

namespace {

// An exception inside a check is a red result, not a crashed suite.
template <typename Fn>
CheckResult guarded(const char* id, const char* name, Fn&& fn) {
    Timer timer;
    try {
        return fn();
    } catch (const std::exception& e) {
        std::ostringstream detail;
        detail << "exception: " << e.what();
        return finish(id, name, false, timer, detail);
    }
}

} // namespace

std::vector<CheckResult> run_all(const std::string& cli_path,
                                 const std::function<void(const CheckResult&)>& on_result) {
    std::vector<CheckResult> results;
    auto add = [&](CheckResult r) {
        if (on_result) on_result(r);
        results.push_back(std::move(r));
    };
    add(guarded("A1", "one-spike inverse", a1_spike_inverse));
    add(guarded("A2", "net-over-gross closed form", a2_net_gross_ratio));
    add(guarded("A3", "one-factor generator oracles", a3_beta_oracle));
    add(guarded("A4", "low-vol vs low-beta correlation", a4_strategy_pair_correlation));
    add(guarded("A5", "accounting identities and causality", a5_accounting_identities));
    add(guarded("A6", "compounding primitives", a6_compounding));
    add(guarded("A7", "planted dividend-yield mechanism", a7_planted_yield_mechanism));
    add(guarded("A8", "residualization", a8_residualization));
    add(guarded("A9", "signal-lag robustness", a9_lag_robustness));
    add(guarded("A10", "re-run determinism", [&] { return a10_determinism(cli_path); }));
    return results;
}

} // namespace lowvol::checks
