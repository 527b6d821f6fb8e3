#include "lowvol/backtest.hpp"
#include "lowvol/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lowvol {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kAnnualize = std::sqrt(252.0);
} // namespace

// ---- accounting ---------------------------------------------------------------

PnlSeries run_backtest(const std::vector<PositionVector>& positions,
                       const MarketData& m, const RiskFreeCurve& rates,
                       double dividend_tax) {
    if (dividend_tax < 0.0 || dividend_tax > 1.0)
        throw DomainError("dividend tax must lie in [0, 1]");
    const int T = m.days();
    std::vector<const PositionVector*> by_day(T, nullptr);
    for (const auto& p : positions) {
        if (p.date_index < 0 || p.date_index >= T - 1)
            throw DomainError("position dated outside the backtest range");
        if (by_day[p.date_index])
            throw DomainError("duplicate positions at " + to_string(m.dates[p.date_index]));
        by_day[p.date_index] = &p;
    }

    PnlSeries pnl;
    pnl.total = Eigen::VectorXd::Zero(T);
    pnl.price = Eigen::VectorXd::Zero(T);
    pnl.dividend = Eigen::VectorXd::Zero(T);
    pnl.financing = Eigen::VectorXd::Zero(T);

    for (int t = 0; t < T - 1; ++t) {
        const PositionVector* pos = by_day[t];
        if (!pos) continue;
        const double rf = rates.daily(t + 1);
        double leg_p = 0.0, leg_d = 0.0, leg_f = 0.0;
        for (int i = 0; i < m.instruments(); ++i) {
            const double x = pos->x[i];
            if (x == 0.0) continue;
            if (!m.is_member(t, i))
                throw DomainError("position in non-member " + m.ids[i] + " at " +
                                  to_string(m.dates[t]));
            if (!m.has_price(t, i) || !m.has_price(t + 1, i))
                throw DomainError("held instrument " + m.ids[i] + " has no price over " +
                                  to_string(m.dates[t]) + " -> " + to_string(m.dates[t + 1]));
            const double prev = m.close(t, i);
            leg_p += x * (m.close(t + 1, i) / prev - 1.0);
            const double dv = m.dividend(t + 1, i) / prev;
            leg_d += x * dv * (x > 0.0 ? 1.0 - dividend_tax : 1.0);
            leg_f += -x * rf;
        }
        pnl.price[t + 1] = leg_p;
        pnl.dividend[t + 1] = leg_d;
        pnl.financing[t + 1] = leg_f;
        pnl.total[t + 1] = leg_p + leg_d + leg_f;
        if (pnl.first < 0) pnl.first = t + 1;
        pnl.last = t + 1;
    }
    if (pnl.first < 0)
        throw DomainError("run_backtest: no positions supplied");
    return pnl;
}

PnlSeries dividend_tax_scenario(const std::vector<PositionVector>& positions,
                                const MarketData& m, const RiskFreeCurve& rates,
                                double tax) {
    return run_backtest(positions, m, rates, tax);
}

AttributionRatio dividend_attribution(const PnlSeries& pnl) {
    const double cum_div = pnl.dividend.sum();
    const double cum_total = pnl.total.sum();
    const double cum_unfin = pnl.price.sum() + cum_div;
    const double scale = pnl.total.cwiseAbs().sum();
    AttributionRatio r;
    r.financed = std::abs(cum_total) <= 1e-12 * std::max(scale, 1e-300)
                     ? kNaN : cum_div / cum_total;
    r.unfinanced = std::abs(cum_unfin) <= 1e-12 * std::max(scale, 1e-300)
                       ? kNaN : cum_div / cum_unfin;
    return r;
}

PerfStats perf_stats(const Eigen::VectorXd& daily) {
    const int n = static_cast<int>(daily.size());
    if (n < 252)
        throw DomainError("perf_stats: need at least 252 daily observations, got " +
                          std::to_string(n));
    PerfStats s;
    s.n_days = n;
    s.mean_daily = daily.mean();
    s.std_daily = std::sqrt((daily.array() - s.mean_daily).square().sum() / (n - 1));
    if (!(s.std_daily > 0.0))
        throw DomainError("perf_stats: zero variance, statistics undefined");
    s.sharpe = s.mean_daily / s.std_daily * kAnnualize;
    s.t_stat = s.sharpe * std::sqrt(n / 252.0);

    std::vector<double> sorted(daily.data(), daily.data() + n);
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    double median = sorted[n / 2];
    if (n % 2 == 0) {
        auto lower = std::max_element(sorted.begin(), sorted.begin() + n / 2);
        median = 0.5 * (median + *lower);
    }
    const double rms = std::sqrt(daily.array().square().sum() / n);
    s.skewness = rms > 0.0 ? (s.mean_daily - median) / rms : 0.0;
    return s;
}

StrategyStats strategy_stats(const PnlSeries& pnl) {
    StrategyStats st;
    st.financed = perf_stats(pnl.total.segment(pnl.first, pnl.days()));
    Eigen::VectorXd unfin = pnl.unfinanced();
    st.unfinanced = perf_stats(unfin.segment(pnl.first, pnl.days()));
    return st;
}

// ---- decile portfolios -----------------------------------------------------------

std::vector<std::vector<int>> assign_sigma_deciles(const RollingEstimators& est,
                                                   const MarketData& m, int t) {
    const Eigen::VectorXd sigma = est.sigma_at(t);
    std::vector<int> valid;
    for (int i : m.members[t])
        if (std::isfinite(sigma[i])) valid.push_back(i);
    const int n = static_cast<int>(valid.size());
    if (n < 10)
        throw DomainError("decile assignment at " + to_string(m.dates[t]) + ": only " +
                          std::to_string(n) + " instruments with valid sigma");
    std::sort(valid.begin(), valid.end(), [&](int a, int b) {
        if (sigma[a] != sigma[b]) return sigma[a] > sigma[b]; // most volatile first
        return a < b;
    });
    std::vector<std::vector<int>> deciles(10);
    const int base = n / 10, extra = n % 10;
    int pos = 0;
    for (int d = 0; d < 10; ++d) {
        const int size = base + (d < extra ? 1 : 0);
        deciles[d].assign(valid.begin() + pos, valid.begin() + pos + size);
        pos += size;
    }
    return deciles;
}

namespace {

// Month-end formation days with a full sigma cross-section.
std::vector<int> formation_days(const RollingEstimators& est, const MarketData& m) {
    std::vector<int> days;
    const int warmup = est.windows().vol_window + est.windows().lag + 1;
    for (int t = warmup; t < m.days() - 1; ++t)
        if (is_month_end(m.dates, t)) days.push_back(t);
    return days;
}

} // namespace

DecileReport decile_portfolios(const RollingEstimators& est, const ReturnPanel& panel,
                               const MarketData& m, const RiskFreeCurve& rates) {
    const int T = m.days();
    DecileReport rep;
    rep.daily.setConstant(T, 10, kNaN);

    const std::vector<int> rebalances = formation_days(est, m);
    if (rebalances.empty())
        throw DomainError("decile_portfolios: no usable rebalance dates");

    std::array<double, 10> size_sum{};
    int n_holdings = 0;
    for (size_t k = 0; k < rebalances.size(); ++k) {
        const int reb = rebalances[k];
        const int until = (k + 1 < rebalances.size()) ? rebalances[k + 1] : T - 1;
        const auto deciles = assign_sigma_deciles(est, m, reb);
        for (int d = 0; d < 10; ++d) size_sum[d] += static_cast<double>(deciles[d].size());
        ++n_holdings;
        for (int t = reb + 1; t <= until; ++t) {
            for (int d = 0; d < 10; ++d) {
                double sum = 0.0;
                int cnt = 0;
                for (int i : deciles[d])
                    if (panel.ok(t, i)) { sum += panel.r(t, i); ++cnt; }
                rep.daily(t, d) = cnt > 0 ? sum / cnt : kNaN;
            }
            if (rep.first < 0) rep.first = t;
            rep.last = t;
        }
    }

    const int len = rep.last - rep.first + 1;
    for (int d = 0; d < 10; ++d) {
        Eigen::VectorXd r(len), excess(len);
        for (int t = rep.first; t <= rep.last; ++t) {
            if (std::isnan(rep.daily(t, d)))
                throw DomainError("decile_portfolios: empty decile on " + to_string(m.dates[t]));
            r[t - rep.first] = rep.daily(t, d);
            excess[t - rep.first] = rep.daily(t, d) - rates.daily(t);
        }
        auto& row = rep.rows[d];
        const PerfStats unfin = perf_stats(r);
        const PerfStats fin = perf_stats(excess);
        row.information_ratio = unfin.sharpe;
        row.sharpe = fin.sharpe;
        row.skewness = unfin.skewness;
        row.avg_size = size_sum[d] / n_holdings;
        for (size_t h = 0; h < DecileReport::horizons.size(); ++h) {
            const int nh = DecileReport::horizons[h];
            double sum = 0.0;
            int cnt = 0;
            for (int start = 0; start + nh <= len; start += nh) {
                double g = 1.0;
                for (int u = 0; u < nh; ++u) g *= 1.0 + r[start + u];
                sum += g - 1.0;
                ++cnt;
            }
            row.mean_nday[h] = cnt > 0 ? sum / cnt : kNaN;
        }
    }
    return rep;
}

// ---- compounding ------------------------------------------------------------------

double compound(double a, double b) { return (1.0 + a) * (1.0 + b) - 1.0; }

double recoup(double drawdown) {
    if (drawdown <= -1.0)
        throw DomainError("recoup: drawdown of -100% or worse cannot be recovered");
    return -drawdown / (1.0 + drawdown);
}

CompoundingReport compounding_ratio(const RollingEstimators& est,
                                    const ReturnPanel& price_panel,
                                    const MarketData& m,
                                    const std::vector<int>& horizons) {
    if (price_panel.mode != ReturnMode::price)
        throw DomainError("compounding_ratio expects ex-dividend (price) returns");
    CompoundingReport rep;
    rep.horizons = horizons;

    const std::vector<int> days = formation_days(est, m);
    if (days.empty())
        throw DomainError("compounding_ratio: no usable formation dates");

    for (int nh : horizons) {
        double sum1 = 0.0, sum10 = 0.0;
        long cnt1 = 0, cnt10 = 0;
        for (int t : days) {
            if (t + nh >= m.days()) continue;
            const auto deciles = assign_sigma_deciles(est, m, t);
            for (int which : {0, 9}) {
                for (int i : deciles[which]) {
                    double g = 1.0;
                    bool ok = true;
                    for (int u = t + 1; u <= t + nh; ++u) {
                        if (!price_panel.ok(u, i)) { ok = false; break; }
                        g *= 1.0 + price_panel.r(u, i);
                    }
                    if (!ok) continue;
                    if (which == 0) { sum1 += g - 1.0; ++cnt1; }
                    else            { sum10 += g - 1.0; ++cnt10; }
                }
            }
        }
        const double m1 = cnt1 > 0 ? sum1 / cnt1 : kNaN;
        const double m10 = cnt10 > 0 ? sum10 / cnt10 : kNaN;
        rep.decile1_mean.push_back(m1);
        rep.decile10_mean.push_back(m10);
        // An average n-day return this close to zero has no meaningful ratio.
        const bool degenerate = !std::isfinite(m1) || !std::isfinite(m10) ||
                                std::abs(m10) < 1e-12;
        rep.ratio.push_back(degenerate ? kNaN : m1 / m10);
    }
    return rep;
}

// ---- up/down differential -----------------------------------------------------------

UpDownReport updown_differential(const DecileReport& deciles,
                                 const RollingEstimators& est) {
    UpDownReport rep;
    double up_sum = 0.0, down_sum = 0.0;
    for (int t = deciles.first; t >= 0 && t <= deciles.last; ++t) {
        const double idx = est.index_return(t);
        if (std::isnan(idx) || idx == 0.0) continue; // zero-return days discarded
        const double gap = deciles.daily(t, 0) - deciles.daily(t, 9);
        if (std::isnan(gap)) continue;
        if (idx > 0.0) { up_sum += gap; ++rep.n_up; }
        else           { down_sum += gap; ++rep.n_down; }
    }
    if (rep.n_down == 0 || rep.n_up == 0) {
        rep.ratio = kNaN;
        return rep;
    }
    rep.up_gap = up_sum / rep.n_up;
    rep.down_gap = down_sum / rep.n_down;
    rep.ratio = rep.up_gap != 0.0 ? std::abs(rep.down_gap) / std::abs(rep.up_gap) : kNaN;
    return rep;
}

// ---- dividend yield vs volatility ------------------------------------------------------

DyVolReport dy_vol_correlation(const MarketData& m, const ReturnPanel& total_panel) {
    const int T = m.days();
    std::vector<std::pair<double, double>> pts; // (sigma, dy)

    for (int t = 252; t < T; ++t) {
        const bool year_end = (t + 1 == T) ? false
                              : m.dates[t].y != m.dates[t + 1].y;
        if (!year_end) continue;
        for (int i : m.members[t]) {
            if (!m.has_price(t, i)) continue;
            double sum = 0.0;
            int cnt = 0;
            for (int u = t - 249; u <= t; ++u) {
                if (!total_panel.ok(u, i)) { cnt = -1; break; }
                sum += total_panel.r(u, i);
                ++cnt;
            }
            if (cnt != 250) continue;
            const double mean = sum / cnt;
            double ss = 0.0;
            for (int u = t - 249; u <= t; ++u) {
                const double d = total_panel.r(u, i) - mean;
                ss += d * d;
            }
            const double sigma = std::sqrt(ss / (cnt - 1)) * kAnnualize;
            double divs = 0.0;
            for (int u = t - 251; u <= t; ++u) divs += m.dividend(u, i);
            pts.emplace_back(sigma, divs / m.close(t, i));
        }
    }

    DyVolReport rep;
    rep.n_points = static_cast<int>(pts.size());
    if (rep.n_points < 2) {
        rep.correlation = kNaN;
        return rep;
    }
    double ms = 0.0, md = 0.0;
    for (auto& [s, d] : pts) { ms += s; md += d; }
    ms /= rep.n_points;
    md /= rep.n_points;
    double css = 0.0, cdd = 0.0, csd = 0.0;
    for (auto& [s, d] : pts) {
        css += (s - ms) * (s - ms);
        cdd += (d - md) * (d - md);
        csd += (s - ms) * (d - md);
    }
    rep.correlation = (css > 0.0 && cdd > 0.0) ? csd / std::sqrt(css * cdd) : kNaN;

    std::sort(pts.begin(), pts.end());
    const int bin = 2000;
    for (size_t start = 0; start + 2 <= pts.size(); start += bin) {
        const size_t end = std::min(pts.size(), start + bin);
        double bs = 0.0, bd = 0.0;
        for (size_t k = start; k < end; ++k) { bs += pts[k].first; bd += pts[k].second; }
        rep.binned.emplace_back(bs / (end - start), bd / (end - start));
    }
    return rep;
}

} // namespace lowvol
