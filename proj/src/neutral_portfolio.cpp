#include "lowvol/neutral_portfolio.hpp"
#include "lowvol/errors.hpp"

#include <cmath>

namespace lowvol {

SpikeMoments spike_moments(const Eigen::VectorXd& sigma) {
    const int n = static_cast<int>(sigma.size());
    if (n < 2)
        throw DomainError("spike_moments: need at least 2 volatilities");
    SpikeMoments mo;
    for (int i = 0; i < n; ++i) {
        if (!(sigma[i] > 0.0) || !std::isfinite(sigma[i]))
            throw DomainError("spike_moments: volatilities must be positive and finite");
        const double y = 1.0 / sigma[i];
        const double y2 = y * y;
        mo.m1 += y;
        mo.m2 += y2;
        mo.m3 += y2 * y;
        mo.m4 += y2 * y2;
    }
    mo.m1 /= n; mo.m2 /= n; mo.m3 /= n; mo.m4 /= n;
    for (int i = 0; i < n; ++i) {
        const double y = 1.0 / sigma[i];
        mo.mabs += y * std::abs(y * y - mo.m2);
    }
    mo.mabs /= n;
    return mo;
}

PositionVector markowitz_positions(const SignalVector& scores,
                                   const Eigen::VectorXd& sigma,
                                   const CorrelationModel& corr,
                                   double target_risk) {
    if (!(target_risk > 0.0))
        throw DomainError("markowitz_positions: target risk must be positive");
    const int n = corr.n();
    const int N = static_cast<int>(sigma.size());

    Eigen::VectorXd q(n);
    for (int k = 0; k < n; ++k) {
        const int i = corr.included[k];
        if (i >= N)
            throw DomainError("markowitz_positions: instrument set mismatch");
        const double s = (i < static_cast<int>(scores.valid.size()) && scores.valid[i])
                             ? scores.score[i] : 0.0;
        if (s != 0.0 && !(sigma[i] > 0.0 && std::isfinite(sigma[i])))
            throw DomainError("markowitz_positions: scored instrument lacks a valid sigma");
        q[k] = (s != 0.0) ? s / sigma[i] : 0.0;
    }

    const Eigen::VectorXd u = corr.apply_inverse(q);
    const double risk2 = q.dot(u); // q' Cinv q = (2 mu)^2 R^2 identity
    if (!(risk2 > 0.0))
        throw DomainError("markowitz_positions: zero-risk solution (all scores zero?)");
    const double scale = target_risk / std::sqrt(risk2);

    PositionVector pos;
    pos.x = Eigen::VectorXd::Zero(N);
    pos.target_risk = target_risk;
    for (int k = 0; k < n; ++k) {
        const int i = corr.included[k];
        if (!(sigma[i] > 0.0 && std::isfinite(sigma[i])))
            continue; // no usable risk estimate: leave the hedge weight unallocated
        pos.x[i] = scale * u[k] / sigma[i];
        pos.nmv += pos.x[i];
        pos.gmv += std::abs(pos.x[i]);
    }
    pos.market_exposure = market_risk_exposure(pos, corr, sigma);
    return pos;
}

PositionVector project_market_mode(const PositionVector& pos,
                                   const CorrelationModel& corr,
                                   const Eigen::VectorXd& sigma) {
    const int n = corr.n();
    Eigen::VectorXd w(n);
    for (int k = 0; k < n; ++k) {
        const int i = corr.included[k];
        w[k] = pos.x[i] * (std::isfinite(sigma[i]) ? sigma[i] : 0.0);
    }
    const double proj = corr.v0.dot(w);
    w -= proj * corr.v0;

    PositionVector out;
    out.date_index = pos.date_index;
    out.target_risk = pos.target_risk;
    out.x = Eigen::VectorXd::Zero(pos.x.size());
    for (int k = 0; k < n; ++k) {
        const int i = corr.included[k];
        if (sigma[i] > 0.0 && std::isfinite(sigma[i]))
            out.x[i] = w[k] / sigma[i];
        out.nmv += out.x[i];
        out.gmv += std::abs(out.x[i]);
    }
    out.market_exposure = market_risk_exposure(out, corr, sigma);
    return out;
}

double market_risk_exposure(const PositionVector& pos,
                            const CorrelationModel& corr,
                            const Eigen::VectorXd& sigma) {
    double dot = 0.0;
    for (int k = 0; k < corr.n(); ++k) {
        const int i = corr.included[k];
        if (std::isfinite(sigma[i]))
            dot += pos.x[i] * sigma[i] * corr.v0[k];
    }
    return std::sqrt(corr.lambda0) * dot;
}

double closed_form_ratio(const SpikeMoments& mo) {
    const double numer = mo.m3 - mo.m1 * mo.m2;
    if (mo.mabs == 0.0)
        return std::numeric_limits<double>::quiet_NaN(); // degenerate: 0/0
    return numer / mo.mabs;
}

double closed_form_market_exposure(const SpikeMoments& mo, double target_risk,
                                   double lambda0, int n) {
    if (!(lambda0 > 0.0) || lambda0 > 0.95 * n)
        throw DomainError("closed_form_market_exposure: lambda0 outside (0, 0.95 N]");
    const double var_y2 = mo.m4 - mo.m2 * mo.m2;
    if (!(var_y2 > 0.0))
        return std::numeric_limits<double>::quiet_NaN();
    return target_risk * mo.m2 /
           std::sqrt(lambda0 * (1.0 - lambda0 / n) * var_y2);
}

} // namespace lowvol
