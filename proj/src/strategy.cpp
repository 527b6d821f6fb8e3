#include "lowvol/strategy.hpp"
#include "lowvol/errors.hpp"

#include <algorithm>
#include <cmath>

namespace lowvol {

CorrelationModel restrict_model(const CorrelationModel& corr,
                                const std::vector<int>& members_sorted) {
    std::vector<int> kept_pos; // positions within corr.included
    kept_pos.reserve(corr.included.size());
    for (int k = 0; k < corr.n(); ++k)
        if (std::binary_search(members_sorted.begin(), members_sorted.end(),
                               corr.included[k]))
            kept_pos.push_back(k);
    if (static_cast<int>(kept_pos.size()) == corr.n())
        return corr; // nothing dropped: keep the model bitwise identical
    if (kept_pos.size() < 2)
        throw DomainError("correlation model restriction leaves fewer than 2 instruments");

    const int ns = static_cast<int>(kept_pos.size());
    Eigen::VectorXd v_sub(ns);
    std::vector<int> included(ns);
    for (int k = 0; k < ns; ++k) {
        v_sub[k] = corr.v0[kept_pos[k]];
        included[k] = corr.included[kept_pos[k]];
    }

    if (corr.mode == CorrelationModel::Mode::dense) {
        CorrelationModel out;
        out.mode = CorrelationModel::Mode::dense;
        out.date_index = corr.date_index;
        out.included = std::move(included);
        out.C.resize(ns, ns);
        for (int a = 0; a < ns; ++a)
            for (int b = 0; b < ns; ++b)
                out.C(a, b) = corr.C(kept_pos[a], kept_pos[b]);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.C);
        out.lambda0 = es.eigenvalues()(ns - 1);
        out.v0 = es.eigenvectors().col(ns - 1);
        if (out.v0.sum() < 0.0) out.v0 = -out.v0;
        out.eps2 = (ns - out.lambda0) / (ns - 1.0);
        out.factorization = out.C.ldlt();
        return out;
    }

    const double overlap2 = v_sub.squaredNorm();
    CorrelationModel out;
    out.mode = CorrelationModel::Mode::spike;
    out.date_index = corr.date_index;
    out.included = std::move(included);
    out.eps2 = corr.eps2; // bulk level is unchanged by the restriction
    out.lambda0 = corr.eps2 + (corr.lambda0 - corr.eps2) * overlap2;
    out.v0 = v_sub / std::sqrt(overlap2);
    if (out.v0.sum() < 0.0) out.v0 = -out.v0;
    return out;
}

StrategyRun run_strategy(const MarketData& m, const ReturnPanel& total_panel,
                         const RiskFreeCurve& rates, const RollingEstimators& est,
                         const StrategyConfig& cfg, int first_day, int last_day) {
    const int T = m.days();
    const EstimatorWindows& w = est.windows();
    const int warmup = std::max({w.corr_window,
                                 w.vol_window + w.lag + 1,
                                 w.beta_window + w.beta_block + w.lag + 1});
    const int t0 = first_day >= 0 ? std::max(first_day, warmup) : warmup;
    const int t1 = last_day >= 0 ? std::min(last_day, T - 2) : T - 2;
    if (t0 > t1)
        throw DomainError("run_strategy: no tradable days (need " +
                          std::to_string(warmup + 2) + " days, have " +
                          std::to_string(T) + ")");
    if (cfg.kind == StrategyKind::metric && !cfg.metric_at)
        throw DomainError("run_strategy: metric strategy needs a metric provider");

    StrategyRun run;
    CorrelationModel base_model;
    int last_refresh = -1;

    for (int t = t0; t <= t1; ++t) {
        if (last_refresh < 0 || t - last_refresh >= w.corr_refresh) {
            base_model = estimate_correlation(total_panel, m, t, w, cfg.corr_mode);
            last_refresh = t;
        }
        const CorrelationModel model = restrict_model(base_model, m.members[t]);

        const Eigen::VectorXd sigma = est.sigma_at(t);
        Eigen::VectorXd values;
        bool ascending = false;
        switch (cfg.kind) {
        case StrategyKind::lowvol:
        case StrategyKind::sector_lowvol:
            values = sigma;       // descending sigma = ascending 1/sigma
            ascending = false;
            break;
        case StrategyKind::lowbeta:
            values = est.beta_at(t);
            ascending = false;
            break;
        case StrategyKind::metric:
            values = cfg.metric_at(t);
            ascending = cfg.metric_ascending;
            break;
        }

        std::vector<unsigned char> valid(m.instruments(), 0);
        for (int i : m.members[t])
            valid[i] = std::isfinite(values[i]) && sigma[i] > 0.0 &&
                       std::isfinite(sigma[i]);

        SignalVector signal = cfg.kind == StrategyKind::sector_lowvol
                                  ? sector_rank_signal(values, valid, m.sectors, ascending)
                                  : rank_signal(values, valid, ascending);

        PositionVector raw = markowitz_positions(signal, sigma, model, cfg.target_risk);
        raw.date_index = t;
        PositionVector pos = project_market_mode(raw, model, sigma);
        pos.date_index = t;

        DiagnosticsRow diag;
        diag.date_index = t;
        diag.nmv = pos.nmv;
        diag.gmv = pos.gmv;
        diag.market_exposure_pre = raw.market_exposure;
        diag.market_exposure_post = pos.market_exposure;
        diag.lambda0 = model.lambda0;
        diag.v0_flat_overlap = std::abs(model.v0.sum()) / std::sqrt(double(model.n()));
        diag.n_active = model.n();
        run.diagnostics.push_back(diag);
        run.positions.push_back(std::move(pos));
    }

    run.pnl = run_backtest(run.positions, m, rates, cfg.dividend_tax);
    return run;
}

} // namespace lowvol
