#include "lowvol/estimators.hpp"
#include "lowvol/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace lowvol {

namespace testhooks {
double spike_bulk_perturb = 0.0;
} // namespace testhooks

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kAnnualize = std::sqrt(252.0);
} // namespace

// ---- rank signals -----------------------------------------------------------

SignalVector rank_signal(const Eigen::VectorXd& values,
                         const std::vector<unsigned char>& valid,
                         bool ascending) {
    const int N = static_cast<int>(values.size());
    SignalVector out;
    out.score = Eigen::VectorXd::Zero(N);
    out.valid.assign(N, 0);

    std::vector<int> idx;
    idx.reserve(N);
    for (int i = 0; i < N; ++i)
        if (i < static_cast<int>(valid.size()) && valid[i] && std::isfinite(values[i]))
            idx.push_back(i);
    const int n = static_cast<int>(idx.size());
    if (n < 2)
        throw DomainError("rank_signal: need at least 2 valid values, got " +
                          std::to_string(n));

    const double sign = ascending ? 1.0 : -1.0;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        double va = sign * values[a], vb = sign * values[b];
        if (va != vb) return va < vb;
        return a < b; // deterministic tie order; ties share a midrank anyway
    });

    // Average ranks over tie groups, then the affine map to [-1, 1].
    int pos = 0;
    while (pos < n) {
        int end = pos + 1;
        while (end < n && values[idx[end]] == values[idx[pos]]) ++end;
        double midrank = 0.5 * ((pos + 1) + end); // ranks are 1-based
        for (int k = pos; k < end; ++k) {
            out.score[idx[k]] = (n > 1) ? (2.0 * midrank - (n + 1)) / (n - 1) : 0.0;
            out.valid[idx[k]] = 1;
        }
        pos = end;
    }
    return out;
}

SignalVector sector_rank_signal(const Eigen::VectorXd& values,
                                const std::vector<unsigned char>& valid,
                                const std::vector<std::string>& sectors,
                                bool ascending) {
    const int N = static_cast<int>(values.size());
    SignalVector out;
    out.score = Eigen::VectorXd::Zero(N);
    out.valid.assign(N, 0);

    std::map<std::string, std::vector<int>> groups;
    for (int i = 0; i < N; ++i)
        if (i < static_cast<int>(valid.size()) && valid[i] && std::isfinite(values[i]))
            groups[sectors[i]].push_back(i);

    for (const auto& [sector, members] : groups) {
        (void)sector;
        if (members.size() < 2) {
            for (int i : members) out.valid[i] = 1; // singleton: score stays 0
            continue;
        }
        Eigen::VectorXd sub(members.size());
        for (size_t k = 0; k < members.size(); ++k) sub[k] = values[members[k]];
        SignalVector local = rank_signal(sub, std::vector<unsigned char>(members.size(), 1),
                                         ascending);
        for (size_t k = 0; k < members.size(); ++k) {
            out.score[members[k]] = local.score[k];
            out.valid[members[k]] = 1;
        }
    }
    return out;
}

// ---- spike correlation model -------------------------------------------------

namespace {
double bulk_inverse_coeff(double eps2) {
    return 1.0 / eps2 + testhooks::spike_bulk_perturb;
}
} // namespace

Eigen::VectorXd CorrelationModel::apply_inverse(const Eigen::VectorXd& q) const {
    if (q.size() != n())
        throw DomainError("apply_inverse: size mismatch");
    if (mode == Mode::dense)
        return factorization.solve(q);
    const double proj = v0.dot(q);
    return (proj / lambda0) * v0 + bulk_inverse_coeff(eps2) * (q - proj * v0);
}

double CorrelationModel::quadratic_form(const Eigen::VectorXd& w) const {
    if (w.size() != n())
        throw DomainError("quadratic_form: size mismatch");
    if (mode == Mode::dense)
        return w.dot(C * w);
    const double proj = v0.dot(w);
    return lambda0 * proj * proj + eps2 * (w.squaredNorm() - proj * proj);
}

Eigen::MatrixXd CorrelationModel::dense_matrix() const {
    if (mode == Mode::dense) return C;
    const int N = n();
    Eigen::MatrixXd P0 = v0 * v0.transpose();
    return lambda0 * P0 + eps2 * (Eigen::MatrixXd::Identity(N, N) - P0);
}

Eigen::MatrixXd CorrelationModel::dense_inverse() const {
    if (mode == Mode::dense)
        return factorization.solve(Eigen::MatrixXd::Identity(n(), n()));
    const int N = n();
    Eigen::MatrixXd P0 = v0 * v0.transpose();
    return (1.0 / lambda0) * P0 +
           bulk_inverse_coeff(eps2) * (Eigen::MatrixXd::Identity(N, N) - P0);
}

CorrelationModel make_spike_model(double lambda0, Eigen::VectorXd v0,
                                  std::vector<int> included) {
    const int N = static_cast<int>(v0.size());
    if (N < 2)
        throw DomainError("spike model needs at least 2 instruments");
    if (!(lambda0 > 0.0))
        throw DomainError("spike model: lambda0 must be positive");
    if (lambda0 > 0.95 * N)
        throw DomainError("spike model: lambda0 = " + std::to_string(lambda0) +
                          " exceeds 0.95 N = " + std::to_string(0.95 * N) +
                          " (bulk coefficient would blow up)");
    CorrelationModel cm;
    cm.mode = CorrelationModel::Mode::spike;
    cm.lambda0 = lambda0;
    cm.eps2 = (N - lambda0) / (N - 1.0);
    cm.v0 = v0.normalized();
    if (cm.v0.sum() < 0.0) cm.v0 = -cm.v0;
    if (included.empty()) {
        cm.included.resize(N);
        std::iota(cm.included.begin(), cm.included.end(), 0);
    } else {
        if (static_cast<int>(included.size()) != N)
            throw DomainError("spike model: included set size mismatch");
        cm.included = std::move(included);
    }
    return cm;
}

CorrelationModel estimate_correlation(const ReturnPanel& panel, const MarketData& m,
                                      int t, const EstimatorWindows& w,
                                      CorrelationModel::Mode mode) {
    const int first = t - w.corr_window + 1;
    if (first < 1)
        throw DomainError("correlation window needs " + std::to_string(w.corr_window) +
                          " days of returns before " + to_string(m.dates[t]));

    // Pool members at t with enough real observations in the window.
    std::vector<int> included;
    for (int i : m.members[t]) {
        int real_obs = 0;
        for (int u = first; u <= t; ++u)
            if (panel.ok(u, i) &&
                m.flag(u, i) == static_cast<unsigned char>(PriceFlag::real))
                ++real_obs;
        if (real_obs >= w.min_coverage * w.corr_window) included.push_back(i);
    }
    const int n = static_cast<int>(included.size());
    if (n < 2)
        throw DomainError("correlation at " + to_string(m.dates[t]) +
                          ": fewer than 2 instruments pass the coverage filter");

    // Standardized window: valid returns centered and scaled per instrument,
    // missing cells set to 0 (the mean), so U^T U / (Tw - 1) stays PSD.
    const int Tw = w.corr_window;
    Eigen::MatrixXd U(Tw, n);
    for (int k = 0; k < n; ++k) {
        const int i = included[k];
        double sum = 0.0;
        int cnt = 0;
        for (int u = first; u <= t; ++u)
            if (panel.ok(u, i)) { sum += panel.r(u, i); ++cnt; }
        const double mean = sum / cnt;
        double ss = 0.0;
        for (int u = first; u <= t; ++u)
            if (panel.ok(u, i)) { double d = panel.r(u, i) - mean; ss += d * d; }
        const double sd = std::sqrt(ss / (cnt - 1));
        if (!(sd > 0.0))
            throw DomainError("correlation: zero-variance instrument " + m.ids[i]);
        for (int u = first; u <= t; ++u)
            U(u - first, k) = panel.ok(u, i) ? (panel.r(u, i) - mean) / sd : 0.0;
    }

    if (mode == CorrelationModel::Mode::spike) {
        // Power iteration for the leading eigenpair of C = U^T U / (Tw - 1).
        // The flat start vector is close to the market mode, so this
        // converges in a handful of iterations on equity-like data.
        Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(double(n)));
        double lambda = 0.0;
        for (int iter = 0; iter < 500; ++iter) {
            Eigen::VectorXd z = U * v;
            Eigen::VectorXd Cv = (U.transpose() * z) / double(Tw - 1);
            double next = v.dot(Cv);
            v = Cv.normalized();
            if (std::abs(next - lambda) <= 1e-13 * n && iter > 2) {
                lambda = next;
                break;
            }
            lambda = next;
        }
        if (lambda > 0.95 * n)
            throw DomainError("correlation at " + to_string(m.dates[t]) +
                              ": leading eigenvalue " + std::to_string(lambda) +
                              " exceeds 0.95 N — market mode degenerate");
        CorrelationModel cm = make_spike_model(lambda, v, included);
        cm.date_index = t;
        return cm;
    }

    if (Tw - 1 < n)
        throw DomainError("dense correlation needs more observations (" +
                          std::to_string(Tw) + ") than instruments (" +
                          std::to_string(n) + "); use spike regularization");

    CorrelationModel cm;
    cm.mode = CorrelationModel::Mode::dense;
    cm.date_index = t;
    cm.included = included;
    cm.C = (U.transpose() * U) / double(Tw - 1);
    // Valid-count differences leave the diagonal marginally below 1; pinning
    // it restores Tr C = N and can only add to the spectrum (keeps PSD).
    cm.C.diagonal().setOnes();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cm.C);
    if (es.info() != Eigen::Success)
        throw DomainError("dense correlation: eigen decomposition failed");
    cm.lambda0 = es.eigenvalues()(n - 1);
    cm.v0 = es.eigenvectors().col(n - 1);
    if (cm.v0.sum() < 0.0) cm.v0 = -cm.v0;
    cm.eps2 = (n - cm.lambda0) / (n - 1.0);
    if (es.eigenvalues()(0) < 1e-10 * cm.lambda0)
        throw DomainError("dense correlation matrix is numerically singular "
                          "(smallest eigenvalue " + std::to_string(es.eigenvalues()(0)) +
                          "); use spike regularization");
    cm.factorization = cm.C.ldlt();
    return cm;
}

// ---- rolling estimators --------------------------------------------------------

RollingEstimators::RollingEstimators(const ReturnPanel& total_panel, const MarketData& m,
                                     EstimatorWindows w)
    : panel_(total_panel), market_(m), w_(w) {
    const int T = m.days(), N = m.instruments();

    index_r_.assign(T, kNaN);
    for (int t = 1; t < T; ++t) {
        double sum = 0.0;
        int cnt = 0;
        for (int i : m.members[t])
            if (panel_.ok(t, i)) { sum += panel_.r(t, i); ++cnt; }
        if (cnt > 0) index_r_[t] = sum / cnt;
    }

    // Overlapping compounded block returns, indexed by their end day.
    const int B = w_.beta_block;
    block_r_.setConstant(T, N, kNaN);
    index_block_r_.assign(T, kNaN);
    for (int t = B; t < T; ++t) {
        for (int i = 0; i < N; ++i) {
            double g = 1.0;
            bool ok = true;
            for (int k = 0; k < B; ++k) {
                if (!panel_.ok(t - k, i)) { ok = false; break; }
                g *= 1.0 + panel_.r(t - k, i);
            }
            if (ok) block_r_(t, i) = g - 1.0;
        }
        double g = 1.0;
        bool ok = true;
        for (int k = 0; k < B; ++k) {
            if (std::isnan(index_r_[t - k])) { ok = false; break; }
            g *= 1.0 + index_r_[t - k];
        }
        if (ok) index_block_r_[t] = g - 1.0;
    }
}

Eigen::VectorXd RollingEstimators::sigma_at(int t) const {
    const int N = market_.instruments();
    Eigen::VectorXd sigma = Eigen::VectorXd::Constant(N, kNaN);
    const int last = t - w_.lag;
    const int first = last - w_.vol_window + 1;
    if (first < 1 || t >= market_.days()) return sigma;

    for (int i = 0; i < N; ++i) {
        double sum = 0.0;
        bool ok = true;
        for (int u = first; u <= last; ++u) {
            if (!panel_.ok(u, i)) { ok = false; break; }
            sum += panel_.r(u, i);
        }
        if (!ok) continue;
        const double mean = sum / w_.vol_window;
        double ss = 0.0;
        for (int u = first; u <= last; ++u) {
            const double d = panel_.r(u, i) - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / (w_.vol_window - 1));
        if (sd > 0.0) sigma[i] = sd * kAnnualize;
    }
    return sigma;
}

Eigen::VectorXd RollingEstimators::beta_at(int t) const {
    const int N = market_.instruments();
    Eigen::VectorXd beta = Eigen::VectorXd::Constant(N, kNaN);
    const int last = t - w_.lag;
    const int first = last - w_.beta_window + 1; // block-return end days
    if (first < 1 + w_.beta_block || t >= market_.days()) return beta;

    double im = 0.0;
    for (int u = first; u <= last; ++u) {
        if (std::isnan(index_block_r_[u])) return beta; // index history incomplete
        im += index_block_r_[u];
    }
    im /= w_.beta_window;
    double ivar = 0.0;
    for (int u = first; u <= last; ++u) {
        const double d = index_block_r_[u] - im;
        ivar += d * d;
    }
    if (!(ivar > 0.0))
        throw DomainError("beta at " + to_string(market_.dates[t]) +
                          ": index block-return variance is zero (degenerate market)");

    for (int i = 0; i < N; ++i) {
        double sm = 0.0;
        bool ok = true;
        for (int u = first; u <= last; ++u) {
            if (std::isnan(block_r_(u, i))) { ok = false; break; }
            sm += block_r_(u, i);
        }
        if (!ok) continue;
        sm /= w_.beta_window;
        double cov = 0.0;
        for (int u = first; u <= last; ++u)
            cov += (block_r_(u, i) - sm) * (index_block_r_[u] - im);
        beta[i] = cov / ivar;
    }
    return beta;
}

} // namespace lowvol
