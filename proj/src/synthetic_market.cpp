#include "lowvol/synthetic_market.hpp"
#include "lowvol/csv.hpp"
#include "lowvol/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace lowvol {

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + (stream + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace {

struct Innovations {
    std::mt19937_64 rng;
    std::normal_distribution<double> normal{0.0, 1.0};
    std::gamma_distribution<double> chi2_half; // for student-t scaling
    int df = 0;

    Innovations(std::uint64_t seed, int student_df)
        : rng(seed), chi2_half(student_df > 0 ? student_df / 2.0 : 1.0, 2.0),
          df(student_df) {}

    // Unit-variance innovation (standardized student-t when df > 2).
    double draw() {
        double z = normal(rng);
        if (df > 2) {
            double chi2 = chi2_half(rng);
            z *= std::sqrt(double(df) / chi2) * std::sqrt((df - 2.0) / df);
        }
        return z;
    }
};

// Standardize to zero mean, unit sample std; throws on degenerate input.
Eigen::VectorXd standardize(const Eigen::VectorXd& v, const char* what) {
    const int n = static_cast<int>(v.size());
    const double mean = v.mean();
    const double sd = std::sqrt((v.array() - mean).square().sum() / (n - 1));
    if (!(sd > 0.0))
        throw DomainError(std::string("generate: degenerate ") + what);
    return (v.array() - mean) / sd;
}

} // namespace

MarketData generate(const MarketSpec& spec, SyntheticTruth* truth_out) {
    const int N = spec.n_instruments;
    const int T = spec.n_days;
    if (N < 10 || T < 2)
        throw DomainError("generate: need at least 10 instruments and 2 days");
    if (!(spec.rho0 > 0.0 && spec.rho0 < 1.0))
        throw DomainError("generate: rho0 must lie in (0, 1)");
    if (spec.sigma_mode == "inverse_gamma" && !(spec.sigma_shape > 4.0))
        throw DomainError("generate: sigma_shape must exceed 4 (finite fourth moments)");
    if (spec.sigma_mode != "inverse_gamma" && spec.sigma_mode != "two_point")
        throw DomainError("generate: unknown sigma_mode '" + spec.sigma_mode + "'");
    if (spec.student_t_df != 0 && spec.student_t_df <= 2)
        throw DomainError("generate: student_t_df must be 0 (gaussian) or > 2");
    if (spec.decile_drifts.empty() ||
        (spec.decile_drifts.size() != 1 && spec.decile_drifts.size() != 10))
        throw DomainError("generate: decile_drifts needs 1 or 10 entries");

    SyntheticTruth truth;
    truth.sigma.resize(N);
    truth.shares.resize(N);
    truth.bp_base.resize(N);
    truth.ep_base.resize(N);

    // Per-instrument substreams: fixed draw order within each stream keeps
    // every instrument's path independent of all others.
    std::vector<Innovations> streams;
    streams.reserve(N);
    for (int i = 0; i < N; ++i)
        streams.emplace_back(mix_seed(spec.seed, i), spec.student_t_df);
    Innovations market(mix_seed(spec.seed, static_cast<std::uint64_t>(N) + 7), 0);

    Eigen::VectorXd start_price(N), dy_noise(N), ou_init(N);
    for (int i = 0; i < N; ++i) {
        auto& st = streams[i];
        if (spec.sigma_mode == "inverse_gamma") {
            std::gamma_distribution<double> gamma(spec.sigma_shape, 1.0);
            const double g = gamma(st.rng);
            const double scale = spec.sigma_mean * (spec.sigma_shape - 1.0);
            truth.sigma[i] = scale / g;
        } else {
            truth.sigma[i] = (i < N / 2) ? spec.sigma_high : spec.sigma_low;
        }
        start_price[i] = 100.0 * std::exp(0.25 * st.normal(st.rng));
        truth.shares[i] = 1e6 * std::exp(1.5 * st.normal(st.rng));
        truth.bp_base[i] = std::exp(0.5 * st.normal(st.rng));
        truth.ep_base[i] = 0.05 * std::exp(0.5 * st.normal(st.rng));
        dy_noise[i] = st.normal(st.rng);
        ou_init[i] = st.normal(st.rng);
    }

    // sigma deciles (0 = most volatile), balanced sizes, deterministic ties.
    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (truth.sigma[a] != truth.sigma[b]) return truth.sigma[a] > truth.sigma[b];
        return a < b;
    });
    truth.sigma_decile.assign(N, 0);
    {
        const int base = N / 10, extra = N % 10;
        int pos = 0;
        for (int d = 0; d < 10; ++d) {
            const int size = base + (d < extra ? 1 : 0);
            for (int k = 0; k < size; ++k) truth.sigma_decile[order[pos++]] = d;
        }
    }
    Eigen::VectorXd drift(N);
    for (int i = 0; i < N; ++i)
        drift[i] = spec.decile_drifts.size() == 1
                       ? spec.decile_drifts[0]
                       : spec.decile_drifts[truth.sigma_decile[i]];

    // ---- dividend-yield plant ------------------------------------------------
    // DY = dy_mean + dy_spread (a yhat + sqrt(1-a^2) uhat), with uhat the DY
    // noise orthogonalized against both y = 1/sigma and sigma, so the sample
    // corr(DY, sigma) equals dy_link exactly: corr(yhat, sigma) is measured
    // in-sample and a = dy_link / corr(yhat, sigma).
    truth.dy.resize(N);
    {
        Eigen::VectorXd y = truth.sigma.cwiseInverse();
        Eigen::VectorXd yhat = standardize(y, "1/sigma cross-section");
        Eigen::VectorXd shat = standardize(truth.sigma, "sigma cross-section");
        const double r_ys = yhat.dot(shat) / (N - 1); // corr(y, sigma), negative

        Eigen::MatrixXd basis(N, 3);
        basis.col(0).setOnes();
        basis.col(1) = yhat;
        basis.col(2) = shat;
        Eigen::VectorXd coeffs = basis.colPivHouseholderQr().solve(dy_noise);
        Eigen::VectorXd uhat = standardize(dy_noise - basis * coeffs, "DY noise");

        double a = 0.0;
        if (spec.dy_link != 0.0) {
            a = spec.dy_link / r_ys;
            if (!(std::abs(a) <= 1.0))
                throw DomainError("generate: dy_link " + std::to_string(spec.dy_link) +
                                  " is infeasible; |corr(1/sigma, sigma)| = " +
                                  std::to_string(std::abs(r_ys)) +
                                  " bounds the attainable magnitude");
        }
        truth.dy = (spec.dy_mean +
                    spec.dy_spread * (a * yhat.array() + std::sqrt(1.0 - a * a) * uhat.array()))
                       .cwiseMax(0.0);
    }

    // ---- paths -----------------------------------------------------------------
    MarketData m;
    m.dates = weekday_calendar(spec.start_date, T);
    m.ids.reserve(N);
    for (int i = 0; i < N; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "SYN%04d", i);
        m.ids.push_back(buf);
        m.id_index[m.ids.back()] = i;
    }
    m.sectors.resize(N);
    for (int i = 0; i < N; ++i)
        m.sectors[i] = "S" + std::to_string(i % std::max(1, spec.sector_count));

    m.close.resize(T, N);
    m.dividend.setZero(T, N);
    m.flag.setConstant(T, N, static_cast<unsigned char>(PriceFlag::real));
    m.pool_name = spec.pool_name;
    m.members.assign(T, {});
    m.member_mask.setOnes(T, N);
    {
        std::vector<int> all(N);
        std::iota(all.begin(), all.end(), 0);
        for (int t = 0; t < T; ++t) m.members[t] = all;
    }

    const double sq_rho = std::sqrt(spec.rho0);
    const double sq_idio = std::sqrt(1.0 - spec.rho0);
    const double kappa = spec.mean_reversion;
    const double decay = std::exp(-kappa);

    Eigen::VectorXd sigma_d = truth.sigma / std::sqrt(252.0);
    Eigen::VectorXd X = Eigen::VectorXd::Zero(N); // OU state (log-price dev)
    const double eta0 = market.draw();
    if (kappa > 0.0) {
        // Stationary joint start: levels share the market component, so
        // increment correlations are exactly rho0 from day one.
        const double level_scale = std::sqrt((1.0 + decay) / 2.0 / (1.0 - decay * decay));
        for (int i = 0; i < N; ++i)
            X[i] = sigma_d[i] * level_scale * (sq_rho * eta0 + sq_idio * ou_init[i]);
    }

    m.close.row(0) = start_price.transpose();
    Eigen::VectorXd log_price = start_price.array().log();

    for (int t = 1; t < T; ++t) {
        const double eta = market.draw();
        const double mkt_scale = (eta < 0.0) ? spec.down_beta_scale : 1.0;
        for (int i = 0; i < N; ++i) {
            const double z = sq_rho * eta * mkt_scale + sq_idio * streams[i].draw();
            if (kappa > 0.0) {
                const double g = std::log1p(drift[i] / 252.0) - 0.5 * sigma_d[i] * sigma_d[i];
                const double x_next = decay * X[i] + sigma_d[i] * std::sqrt((1.0 + decay) / 2.0) * z;
                log_price[i] += g + (x_next - X[i]);
                X[i] = x_next;
                m.close(t, i) = std::exp(log_price[i]);
            } else {
                // Arithmetic one-factor model; the clamp only matters for
                // heavy-tailed innovation modes and keeps prices positive.
                const double r = std::max(drift[i] / 252.0 + sigma_d[i] * z, -0.999);
                m.close(t, i) = m.close(t - 1, i) * (1.0 + r);
            }
        }
        // Quarterly dividend on the last trading day of Mar/Jun/Sep/Dec.
        const bool quarter_end = is_month_end(m.dates, t) && (m.dates[t].m % 3 == 0);
        if (quarter_end)
            for (int i = 0; i < N; ++i)
                m.dividend(t, i) = truth.dy[i] / 4.0 * m.close(t, i);
    }
    if (truth_out) *truth_out = std::move(truth);
    return m;
}

RiskFreeCurve flat_rates(const MarketData& m, double annual_rate) {
    RiskFreeCurve c;
    c.annual.assign(m.days(), annual_rate);
    return c;
}

void write_metrics_csv(const MarketData& m, const SyntheticTruth& truth,
                       const std::string& path) {
    const int T = m.days(), N = m.instruments();
    std::string out = "date,instrument,metric,value\n";
    for (int t = 0; t < T; ++t) {
        if (!is_month_end(m.dates, t)) continue;
        const std::string ds = to_string(m.dates[t]);
        for (int i = 0; i < N; ++i) {
            auto row = [&](const char* metric, double v) {
                out += ds + "," + m.ids[i] + "," + metric + "," + fmt_full(v) + "\n";
            };
            if (t >= 252) {
                double divs = 0.0;
                for (int u = t - 251; u <= t; ++u) divs += m.dividend(u, i);
                row("dp", divs / m.close(t, i));
                double growth = 1.0;
                for (int u = t - 251; u <= t - 21; ++u)
                    growth *= (m.close(u, i) + m.dividend(u, i)) / m.close(u - 1, i);
                row("umd", growth - 1.0);
            }
            row("cap", m.close(t, i) * truth.shares[i]);
            row("bp", truth.bp_base[i]);
            row("ep", truth.ep_base[i]);
        }
    }
    write_file_atomic(path, out);
}

Eigen::VectorXd oracle_beta(const Eigen::VectorXd& sigma_sample) {
    const double av = sigma_sample.mean();
    if (!(av > 0.0))
        throw DomainError("oracle_beta: non-positive mean volatility");
    return sigma_sample / av;
}

Eigen::VectorXd oracle_idio_var(const Eigen::VectorXd& sigma_sample, double rho0) {
    return sigma_sample.array().square() * (1.0 - rho0);
}

} // namespace lowvol
