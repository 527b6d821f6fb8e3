#include "lowvol/factor_lab.hpp"

#include "lowvol/csv.hpp"
#include "lowvol/errors.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace lowvol {

Eigen::VectorXd MetricTable::at(const std::string& metric, int t) const {
    auto it = panels.find(metric);
    if (it == panels.end())
        throw DomainError("metric '" + metric + "' not present in metrics file");
    return it->second.row(t).transpose();
}

double MetricTable::coverage(const std::string& metric, int t,
                             const std::vector<int>& universe) const {
    if (universe.empty()) return 0.0;
    const Eigen::MatrixXd& panel = panels.at(metric);
    int have = 0;
    for (int i : universe)
        if (std::isfinite(panel(t, i))) ++have;
    return double(have) / double(universe.size());
}

MetricTable load_metrics(const std::string& path, const MarketData& m) {
    const int T = m.days();
    const int N = m.instruments();

    std::map<Date, int> date_index;
    for (int t = 0; t < T; ++t) date_index[m.dates[t]] = t;

    // metric -> sparse observations; filled forward onto the calendar below.
    std::map<std::string, std::vector<std::tuple<int, int, double>>> obs;

    read_csv(path, {"date", "instrument", "metric", "value"}, [&](const CsvRow& row) {
        const auto& f = *row.fields;
        Date d = parse_date(f[0], path + ":" + std::to_string(row.line_no));
        auto dit = date_index.find(d);
        if (dit == date_index.end())
            throw DomainError(path + ":" + std::to_string(row.line_no) + ": date " +
                              f[0] + " not on the trading calendar");
        auto iit = m.id_index.find(f[1]);
        if (iit == m.id_index.end())
            throw DomainError(path + ":" + std::to_string(row.line_no) +
                              ": unknown instrument '" + f[1] + "'");
        double v = parse_number(f[3],
                                path + ":" + std::to_string(row.line_no) + " value");
        obs[f[2]].emplace_back(dit->second, iit->second, v);
    });

    MetricTable table;
    for (auto& [metric, points] : obs) {
        Eigen::MatrixXd panel =
            Eigen::MatrixXd::Constant(T, N, std::numeric_limits<double>::quiet_NaN());
        std::sort(points.begin(), points.end());
        for (size_t k = 0; k + 1 < points.size(); ++k) {
            if (std::get<0>(points[k]) == std::get<0>(points[k + 1]) &&
                std::get<1>(points[k]) == std::get<1>(points[k + 1]))
                throw DomainError(path + ": duplicate " + metric + " observation for " +
                                  m.ids[std::get<1>(points[k])] + " on " +
                                  to_string(m.dates[std::get<0>(points[k])]));
        }
        for (const auto& [t, i, v] : points) panel(t, i) = v;
        // As-of join: each day sees the latest observation at or before it.
        for (int i = 0; i < N; ++i) {
            double last = std::numeric_limits<double>::quiet_NaN();
            for (int t = 0; t < T; ++t) {
                if (std::isfinite(panel(t, i)))
                    last = panel(t, i);
                else
                    panel(t, i) = last;
            }
        }
        table.panels[metric] = std::move(panel);
    }
    return table;
}

FactorDefinition factor_definition(const std::string& name) {
    static const std::vector<FactorDefinition> kCatalogue = {
        {"MKT", "", true},        {"LOWVOL", "", true},   {"LOWBETA", "", true},
        {"UMD", "umd", true},     {"SMB", "cap", false},  {"HML", "bp", true},
        {"EP", "ep", true},       {"DP", "dp", true},
    };
    for (const auto& def : kCatalogue)
        if (def.name == name) return def;
    std::ostringstream msg;
    msg << "unknown factor '" << name << "' (known:";
    for (const auto& def : kCatalogue) msg << ' ' << def.name;
    msg << ')';
    throw DomainError(msg.str());
}

namespace {

// MKT: $1 long every member, equally weighted, rebalanced daily. Gross of
// financing it is the pool's average total return.
StrategyRun build_market_factor(const MarketData& m, const RiskFreeCurve& rates,
                                int first_day, int last_day) {
    const int T = m.days();
    int t0 = first_day < 0 ? 0 : first_day;
    int t1 = last_day < 0 ? T - 2 : last_day;
    if (t0 > t1) throw DomainError("market factor: empty day range");

    std::vector<PositionVector> positions;
    positions.reserve(size_t(t1 - t0 + 1));
    for (int t = t0; t <= t1; ++t) {
        const auto& mem = m.members[size_t(t)];
        if (mem.empty()) throw DomainError("market factor: empty pool on " + to_string(m.dates[t]));
        PositionVector pos;
        pos.date_index = t;
        pos.x = Eigen::VectorXd::Zero(m.instruments());
        for (int i : mem) pos.x[i] = 1.0 / double(mem.size());
        pos.nmv = 1.0;
        pos.gmv = 1.0;
        pos.target_risk = 0.0;
        pos.market_exposure = std::numeric_limits<double>::quiet_NaN();
        positions.push_back(std::move(pos));
    }

    StrategyRun run;
    run.pnl = run_backtest(positions, m, rates, 0.0);
    run.positions = std::move(positions);
    return run;
}

} // namespace

StrategyRun build_factor(const FactorDefinition& def, const MarketData& m,
                         const ReturnPanel& total_panel, const RiskFreeCurve& rates,
                         const RollingEstimators& est, const StrategyConfig& base_cfg,
                         const MetricTable* metrics, int first_day, int last_day) {
    if (def.name == "MKT") return build_market_factor(m, rates, first_day, last_day);

    StrategyConfig cfg = base_cfg;
    if (def.name == "LOWVOL") {
        cfg.kind = StrategyKind::lowvol;
        return run_strategy(m, total_panel, rates, est, cfg, first_day, last_day);
    }
    if (def.name == "LOWBETA") {
        cfg.kind = StrategyKind::lowbeta;
        return run_strategy(m, total_panel, rates, est, cfg, first_day, last_day);
    }

    if (metrics == nullptr || !metrics->has(def.metric))
        throw DomainError("factor " + def.name + " needs metric '" + def.metric +
                          "' but no metrics file provides it");
    const std::string metric = def.metric;

    // The factor starts when its metric does: advance past the days before
    // the first cross-section with adequate coverage (a drop back below the
    // floor after that still errors -- that is a data problem, not a start).
    if (first_day < 0) {
        for (int t = 0; t < m.days(); ++t)
            if (metrics->coverage(metric, t, m.members[size_t(t)]) >= 0.5) {
                first_day = t;
                break;
            }
        if (first_day < 0)
            throw DomainError("factor " + def.name + ": metric '" + metric +
                              "' never covers half the pool");
    }
    cfg.kind = StrategyKind::metric;
    cfg.metric_name = def.name;
    cfg.metric_ascending = def.ascending;
    cfg.metric_at = [metrics, metric, &m](int t) {
        Eigen::VectorXd v = metrics->at(metric, t);
        std::vector<int> pool = m.members[size_t(t)];
        double cov = metrics->coverage(metric, t, pool);
        if (cov < 0.5) {
            std::ostringstream msg;
            msg << "metric '" << metric << "' covers " << cov * 100.0 << "% of the pool on "
                << to_string(m.dates[t]) << " (need >= 50%)";
            throw DomainError(msg.str());
        }
        return v;
    };
    return run_strategy(m, total_panel, rates, est, cfg, first_day, last_day);
}

// ---- monthly aggregation ------------------------------------------------------------

MonthlySeries monthly_sums(const PnlSeries& pnl, const MarketData& m) {
    MonthlySeries out;
    if (pnl.first < 0) return out;

    std::vector<int> keys;
    std::vector<double> sums;
    for (int t = pnl.first; t <= pnl.last; ++t) {
        int key = m.dates[t].month_key();
        if (keys.empty() || keys.back() != key) {
            keys.push_back(key);
            sums.push_back(0.0);
        }
        sums.back() += pnl.total[t];
    }
    // A month counts only when the series covers it end to end, so partial
    // first/last months are dropped.
    size_t lo = 0, hi = keys.size();
    if (!keys.empty() && pnl.first > 0 && m.dates[pnl.first - 1].month_key() == keys.front()) ++lo;
    if (hi > lo && pnl.last + 1 < m.days() && m.dates[pnl.last + 1].month_key() == keys.back()) --hi;

    out.month_keys.assign(keys.begin() + long(lo), keys.begin() + long(hi));
    out.values.resize(long(hi - lo));
    for (size_t k = lo; k < hi; ++k) out.values[long(k - lo)] = sums[k];
    return out;
}

namespace {

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd da = a.array() - a.mean();
    Eigen::VectorXd db = b.array() - b.mean();
    double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
    if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return da.dot(db) / denom;
}

} // namespace

CorrelationTable pnl_correlation(
    const std::vector<std::pair<std::string, MonthlySeries>>& series) {
    if (series.size() < 2) throw DomainError("correlation table needs at least two series");

    // Months present in every series.
    std::set<int> common(series[0].second.month_keys.begin(), series[0].second.month_keys.end());
    for (size_t s = 1; s < series.size(); ++s) {
        std::set<int> keep;
        for (int key : series[s].second.month_keys)
            if (common.count(key)) keep.insert(key);
        common.swap(keep);
    }
    const int M = int(common.size());
    if (M < 24) {
        std::ostringstream msg;
        msg << "correlation needs >= 24 common months, have " << M;
        throw DomainError(msg.str());
    }

    const int S = int(series.size());
    Eigen::MatrixXd values(M, S);
    for (int s = 0; s < S; ++s) {
        const MonthlySeries& ms = series[size_t(s)].second;
        int row = 0;
        for (size_t k = 0; k < ms.month_keys.size(); ++k)
            if (common.count(ms.month_keys[k])) values(row++, s) = ms.values[long(k)];
    }

    CorrelationTable table;
    table.n_months = M;
    table.corr.resize(S, S);
    for (int s = 0; s < S; ++s) table.names.push_back(series[size_t(s)].first);
    for (int a = 0; a < S; ++a)
        for (int b = 0; b < S; ++b)
            table.corr(a, b) = a == b ? 1.0 : pearson(values.col(a), values.col(b));
    return table;
}

// ---- residualization ------------------------------------------------------------------

namespace {

struct AlignedSample {
    std::vector<int> month_keys;
    Eigen::VectorXd y;
    Eigen::MatrixXd X; // columns = regressors, no intercept column
};

AlignedSample align(const MonthlySeries& target,
                    const std::vector<std::pair<std::string, MonthlySeries>>& regressors) {
    std::set<int> common(target.month_keys.begin(), target.month_keys.end());
    for (const auto& [name, ms] : regressors) {
        std::set<int> keep;
        for (int key : ms.month_keys)
            if (common.count(key)) keep.insert(key);
        common.swap(keep);
    }
    AlignedSample out;
    out.month_keys.assign(common.begin(), common.end());
    const int M = int(out.month_keys.size());
    const int K = int(regressors.size());
    out.y.resize(M);
    out.X.resize(M, K);
    {
        int row = 0;
        for (size_t k = 0; k < target.month_keys.size(); ++k)
            if (common.count(target.month_keys[k])) out.y[row++] = target.values[long(k)];
    }
    for (int j = 0; j < K; ++j) {
        const MonthlySeries& ms = regressors[size_t(j)].second;
        int row = 0;
        for (size_t k = 0; k < ms.month_keys.size(); ++k)
            if (common.count(ms.month_keys[k])) out.X(row++, j) = ms.values[long(k)];
    }
    return out;
}

void check_collinear(const Eigen::MatrixXd& X,
                     const std::vector<std::pair<std::string, MonthlySeries>>& regressors) {
    const int K = int(X.cols());
    if (K < 2) return;
    Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
    Eigen::MatrixXd gram = centered.transpose() * centered;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    double lo = eig.eigenvalues().minCoeff();
    double hi = eig.eigenvalues().maxCoeff();
    if (lo > hi * 1e-12) return;
    // Name the most correlated pair to make the failure actionable.
    double worst = -1.0;
    int wa = 0, wb = 1;
    for (int a = 0; a < K; ++a)
        for (int b = a + 1; b < K; ++b) {
            double c = std::abs(pearson(X.col(a), X.col(b)));
            if (c > worst) { worst = c; wa = a; wb = b; }
        }
    std::ostringstream msg;
    msg << "regressors are collinear; worst pair " << regressors[size_t(wa)].first << " / "
        << regressors[size_t(wb)].first << " (|corr| = " << worst << ")";
    throw DomainError(msg.str());
}

// OLS with intercept via QR on [1 | X]; returns (intercept, slopes).
std::pair<double, Eigen::VectorXd> ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& X) {
    const int M = int(X.rows());
    const int K = int(X.cols());
    Eigen::MatrixXd design(M, K + 1);
    design.col(0).setOnes();
    design.rightCols(K) = X;
    Eigen::VectorXd coef = design.colPivHouseholderQr().solve(y);
    return {coef[0], coef.tail(K)};
}

} // namespace

ResidualReport residualize(const MonthlySeries& target,
                           const std::vector<std::pair<std::string, MonthlySeries>>& regressors,
                           int rolling_months) {
    ResidualReport report;
    for (const auto& [name, ms] : regressors) report.regressor_names.push_back(name);
    report.window_months = rolling_months;

    if (regressors.empty()) {
        report.residual = target;
        report.coefficients.resize(0);
        report.residual_regressor_corr.resize(0);
        if (target.values.size() >= 2) {
            double mean = target.values.mean();
            double sd = std::sqrt((target.values.array() - mean).square().sum() /
                                  double(target.values.size() - 1));
            report.intercept = mean;
            report.residual_sharpe = sd == 0.0 ? 0.0 : mean / sd * std::sqrt(12.0);
        }
        return report;
    }

    AlignedSample sample = align(target, regressors);
    const int M = int(sample.y.size());
    const int K = int(sample.X.cols());
    if (rolling_months != 0 && rolling_months < 24)
        throw ConfigError("rolling window must be >= 24 months");
    int need = rolling_months == 0 ? K + 2 : rolling_months;
    if (M < std::max(need, 24)) {
        std::ostringstream msg;
        msg << "residualization needs >= " << std::max(need, 24) << " common months, have " << M;
        throw DomainError(msg.str());
    }
    check_collinear(sample.X, regressors);

    Eigen::VectorXd residual(M);
    if (rolling_months == 0) {
        auto [intercept, slopes] = ols(sample.y, sample.X);
        report.intercept = intercept;
        report.coefficients = slopes;
        residual = sample.y.array() - intercept - (sample.X * slopes).array();
    } else {
        // Trailing-window coefficients; the first window's fit also covers the
        // months inside it so the residual spans the full sample.
        report.coefficients = Eigen::VectorXd::Zero(K);
        int fits = 0;
        for (int end = rolling_months; end <= M; ++end) {
            int start = end - rolling_months;
            auto block_y = sample.y.segment(start, rolling_months);
            auto block_X = sample.X.middleRows(start, rolling_months);
            auto [intercept, slopes] = ols(block_y, block_X);
            if (end == rolling_months)
                for (int r = 0; r < rolling_months; ++r)
                    residual[r] = sample.y[r] - intercept - sample.X.row(r).dot(slopes);
            else
                residual[end - 1] =
                    sample.y[end - 1] - intercept - sample.X.row(end - 1).dot(slopes);
            report.coefficients += slopes;
            report.intercept += intercept;
            ++fits;
        }
        report.coefficients /= double(fits);
        report.intercept /= double(fits);
    }

    report.residual.month_keys = sample.month_keys;
    report.residual.values = residual;

    double mean = residual.mean();
    double sd = std::sqrt((residual.array() - mean).square().sum() / double(M - 1));
    report.residual_sharpe = sd == 0.0 ? 0.0 : mean / sd * std::sqrt(12.0);

    report.residual_regressor_corr.resize(K);
    for (int j = 0; j < K; ++j)
        report.residual_regressor_corr[j] = pearson(residual, sample.X.col(j));
    return report;
}

// ---- holdings bias -----------------------------------------------------------------------

HoldingsBiasReport holdings_bias(
    const std::string& holdings_file, const MarketData& m,
    const std::map<std::string, std::function<Eigen::VectorXd(int)>>& signals,
    const MetricTable* metrics, HoldingsNormalization normalization) {
    const int N = m.instruments();

    std::map<Date, int> date_index;
    for (int t = 0; t < m.days(); ++t) date_index[m.dates[t]] = t;

    // date -> fund -> instrument dollars
    std::map<int, std::map<std::string, Eigen::VectorXd>> snapshots;
    read_csv(holdings_file, {"date", "fund", "instrument", "dollar_value"},
             [&](const CsvRow& row) {
                 const auto& f = *row.fields;
                 Date d = parse_date(f[0],
                                     holdings_file + ":" + std::to_string(row.line_no));
                 auto dit = date_index.find(d);
                 if (dit == date_index.end())
                     throw DomainError(holdings_file + ":" + std::to_string(row.line_no) +
                                       ": date " + f[0] +
                                       " not on the trading calendar");
                 auto iit = m.id_index.find(f[2]);
                 if (iit == m.id_index.end())
                     throw DomainError(holdings_file + ":" + std::to_string(row.line_no) +
                                       ": unknown instrument '" + f[2] + "'");
                 double v = parse_number(f[3], holdings_file + ":" +
                                                   std::to_string(row.line_no) +
                                                   " dollar_value");
                 if (v < 0)
                     throw DomainError(holdings_file + ":" + std::to_string(row.line_no) +
                                       ": negative holding");
                 auto& fund = snapshots[dit->second][f[1]];
                 if (fund.size() == 0) fund = Eigen::VectorXd::Zero(N);
                 fund[iit->second] += v;
             });
    if (snapshots.empty()) throw DomainError(holdings_file + ": no holdings rows");

    HoldingsBiasReport report;
    for (const auto& [t, funds] : snapshots) {
        report.sample_days.push_back(t);

        // Aggregate tilt per instrument.
        Eigen::VectorXd tilt = Eigen::VectorXd::Zero(N);
        if (normalization == HoldingsNormalization::by_fund_total) {
            for (const auto& [fund, dollars] : funds) {
                double total = dollars.sum();
                if (total <= 0.0)
                    throw DomainError(holdings_file + ": fund '" + fund +
                                      "' holds nothing on " + to_string(m.dates[t]));
                tilt += dollars / total;
            }
            tilt /= double(funds.size());
        } else {
            Eigen::VectorXd agg = Eigen::VectorXd::Zero(N);
            for (const auto& [fund, dollars] : funds) agg += dollars;
            if (metrics == nullptr || !metrics->has("cap"))
                throw DomainError("holdings bias by market cap needs the 'cap' metric");
            Eigen::VectorXd cap = metrics->at("cap", t);
            for (int i = 0; i < N; ++i) {
                if (agg[i] == 0.0) continue;
                if (!std::isfinite(cap[i]) || cap[i] <= 0.0)
                    throw DomainError("holdings bias: no market cap for held instrument " +
                                      m.ids[size_t(i)] + " on " + to_string(m.dates[t]));
                tilt[i] = agg[i] / cap[i];
            }
        }

        for (const auto& [name, signal_at] : signals) {
            Eigen::VectorXd sig = signal_at(t);
            // Correlate across the whole pool; unheld members carry tilt 0
            // (the under-weights are half of what a tilt is).
            std::vector<double> xs, ys;
            for (int i : m.members[size_t(t)]) {
                if (!std::isfinite(sig[i])) continue;
                xs.push_back(tilt[i]);
                ys.push_back(sig[i]);
            }
            double corr = std::numeric_limits<double>::quiet_NaN();
            if (xs.size() >= 3) {
                Eigen::Map<Eigen::VectorXd> vx(xs.data(), long(xs.size()));
                Eigen::Map<Eigen::VectorXd> vy(ys.data(), long(ys.size()));
                corr = pearson(vx, vy);
            }
            report.correlation[name].push_back(corr);
        }
    }

    // Trailing 365-day average of the raw correlations (NaNs skipped).
    for (const auto& [name, values] : report.correlation) {
        std::vector<double> smooth(values.size(), std::numeric_limits<double>::quiet_NaN());
        for (size_t k = 0; k < values.size(); ++k) {
            double sum = 0.0;
            int cnt = 0;
            for (size_t j = 0; j <= k; ++j) {
                const Date& a = m.dates[report.sample_days[j]];
                const Date& b = m.dates[report.sample_days[k]];
                int days_apart = (b.y - a.y) * 365 + (b.m - a.m) * 30 + (b.d - a.d);
                if (days_apart > 365 || !std::isfinite(values[j])) continue;
                sum += values[j];
                ++cnt;
            }
            if (cnt > 0) smooth[k] = sum / double(cnt);
        }
        report.smoothed[name] = std::move(smooth);
    }
    return report;
}

// ---- dividend-yield deciles -------------------------------------------------------------

Eigen::VectorXd trailing_yield_at(const MarketData& m, int t) {
    const int N = m.instruments();
    Eigen::VectorXd dy = Eigen::VectorXd::Constant(N, std::numeric_limits<double>::quiet_NaN());
    if (t < 252) return dy;
    for (int i = 0; i < N; ++i) {
        if (!m.has_price(t, i)) continue;
        double paid = 0.0;
        for (int s = t - 251; s <= t; ++s) paid += m.dividend(s, i);
        dy[i] = paid / m.close(t, i);
    }
    return dy;
}

DyDecileReport dy_decile_betas(const MarketData& m, const ReturnPanel& total_panel,
                               const std::function<Eigen::VectorXd(int)>& dy_at,
                               int first_day) {
    const int T = m.days();
    if (first_day < 0 || first_day >= T - 1)
        throw DomainError("dividend-yield deciles: bad first day");

    // Monthly formation; decile 0 = lowest yield.
    std::vector<double> sum(10, 0.0), sumsq(10, 0.0);
    std::vector<double> index_sum = sum, cross = sum, dy_sum = sum;
    std::vector<long> count(10, 0);
    std::vector<double> hml, idx;

    std::array<std::vector<int>, 10> groups;
    int months = 0;
    for (int t = first_day; t < T - 1; ++t) {
        bool form = t == first_day || m.dates[t].month_key() != m.dates[t - 1].month_key();
        if (form) {
            Eigen::VectorXd dy = dy_at(t);
            std::vector<std::pair<double, int>> ranked;
            for (int i : m.members[size_t(t)])
                if (std::isfinite(dy[i])) ranked.emplace_back(dy[i], i);
            if (ranked.size() < 10)
                throw DomainError("dividend-yield deciles: fewer than 10 instruments on " +
                                  to_string(m.dates[t]));
            std::sort(ranked.begin(), ranked.end());
            int n = int(ranked.size());
            int base = n / 10, extra = n % 10;
            int at = 0;
            for (int d = 0; d < 10; ++d) {
                int size = base + (d < extra ? 1 : 0);
                groups[size_t(d)].clear();
                for (int k = 0; k < size; ++k) groups[size_t(d)].push_back(ranked[size_t(at + k)].second);
                at += size;
            }
            ++months;
        }

        // Day t -> t+1 returns.
        const auto& mem = m.members[size_t(t)];
        double index_r = 0.0;
        int index_n = 0;
        for (int i : mem)
            if (total_panel.ok(t + 1, i)) { index_r += total_panel.r(t + 1, i); ++index_n; }
        if (index_n == 0) continue;
        index_r /= double(index_n);

        double decile_r[10];
        bool all_ok = true;
        for (int d = 0; d < 10 && all_ok; ++d) {
            double acc = 0.0;
            int cnt = 0;
            for (int i : groups[size_t(d)])
                if (total_panel.ok(t + 1, i)) { acc += total_panel.r(t + 1, i); ++cnt; }
            if (cnt == 0) { all_ok = false; break; }
            decile_r[d] = acc / double(cnt);
        }
        if (!all_ok) continue;

        for (int d = 0; d < 10; ++d) {
            sum[size_t(d)] += decile_r[d];
            index_sum[size_t(d)] += index_r;
            cross[size_t(d)] += decile_r[d] * index_r;
            sumsq[size_t(d)] += index_r * index_r;
            ++count[size_t(d)];
        }
        hml.push_back(decile_r[9] - decile_r[0]);
        idx.push_back(index_r);
    }

    if (months < 2 || count[0] < 252)
        throw DomainError("dividend-yield deciles: insufficient sample");

    DyDecileReport report;
    for (int d = 0; d < 10; ++d) {
        double n = double(count[size_t(d)]);
        double cov = cross[size_t(d)] / n - sum[size_t(d)] / n * (index_sum[size_t(d)] / n);
        double var = sumsq[size_t(d)] / n - (index_sum[size_t(d)] / n) * (index_sum[size_t(d)] / n);
        if (var <= 0.0) throw DomainError("dividend-yield deciles: index variance is zero");
        report.beta[size_t(d)] = cov / var;
    }

    // Average planted/realized yield per decile over formation dates.
    {
        std::vector<double> dy_acc(10, 0.0);
        std::vector<long> dy_cnt(10, 0);
        for (int t = first_day; t < T - 1; ++t) {
            bool form = t == first_day || m.dates[t].month_key() != m.dates[t - 1].month_key();
            if (!form) continue;
            Eigen::VectorXd dy = dy_at(t);
            std::vector<std::pair<double, int>> ranked;
            for (int i : m.members[size_t(t)])
                if (std::isfinite(dy[i])) ranked.emplace_back(dy[i], i);
            std::sort(ranked.begin(), ranked.end());
            int n = int(ranked.size());
            int base = n / 10, extra = n % 10;
            int at = 0;
            for (int d = 0; d < 10; ++d) {
                int size = base + (d < extra ? 1 : 0);
                for (int k = 0; k < size; ++k) dy_acc[size_t(d)] += ranked[size_t(at + k)].first;
                dy_cnt[size_t(d)] += size;
                at += size;
            }
        }
        for (int d = 0; d < 10; ++d)
            report.avg_dy[size_t(d)] = dy_cnt[size_t(d)] ? dy_acc[size_t(d)] / double(dy_cnt[size_t(d)]) : 0.0;
    }

    if (hml.size() >= 2) {
        Eigen::Map<Eigen::VectorXd> vh(hml.data(), long(hml.size()));
        Eigen::Map<Eigen::VectorXd> vi(idx.data(), long(idx.size()));
        report.hml_index_correlation = pearson(vh, vi);
    }
    return report;
}

} // namespace lowvol
