#include "lowvol/synthetic_market.hpp"
#include "lowvol/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace lowvol;

namespace {

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd x = a.array() - a.mean();
    Eigen::VectorXd y = b.array() - b.mean();
    return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

} // namespace

TEST_CASE("generation is a pure function of its request") {
    MarketSpec spec;
    spec.n_instruments = 40;
    spec.n_days = 200;
    spec.seed = 1000003;

    SyntheticTruth t1, t2;
    MarketData a = generate(spec, &t1);
    MarketData b = generate(spec, &t2);
    CHECK((a.close.array() == b.close.array()).all());
    CHECK((a.dividend.array() == b.dividend.array()).all());
    CHECK((t1.sigma.array() == t2.sigma.array()).all());
    CHECK(t1.sigma_decile == t2.sigma_decile);

    spec.seed = 1000004;
    MarketData c = generate(spec);
    CHECK((a.close.array() != c.close.array()).any());
}

TEST_CASE("seed substreams decorrelate instruments and the market factor") {
    CHECK(mix_seed(42, 0) != mix_seed(42, 1));
    CHECK(mix_seed(42, 0) != mix_seed(43, 0));
    CHECK(mix_seed(42, 7) == mix_seed(42, 7));
}

TEST_CASE("planted dividend yields hit the target correlation with sigma") {
    MarketSpec spec;
    spec.n_instruments = 300;
    spec.n_days = 10;
    spec.seed = 9;
    spec.dy_mean = 0.05;   // high mean, small spread: the >= 0 clamp never binds
    spec.dy_spread = 0.005;

    for (double link : {-0.6, -0.2, 0.0, 0.4}) {
        spec.dy_link = link;
        SyntheticTruth truth;
        generate(spec, &truth);
        CHECK(truth.dy.minCoeff() > 0.0);
        CHECK(truth.dy.mean() == doctest::Approx(spec.dy_mean).epsilon(1e-12));
        if (link == 0.0)
            CHECK(std::abs(pearson(truth.dy, truth.sigma)) < 1e-10);
        else
            CHECK(pearson(truth.dy, truth.sigma) ==
                  doctest::Approx(link).epsilon(1e-10));
    }

    // A target beyond |corr(1/sigma, sigma)| cannot be represented.
    spec.dy_link = -0.999;
    CHECK_THROWS_WITH_AS(generate(spec), doctest::Contains("infeasible"), DomainError);
}

TEST_CASE("dividends are quarterly lumps proportional to the planted yield") {
    MarketSpec spec;
    spec.n_instruments = 15;
    spec.n_days = 300; // > one year of weekdays
    spec.seed = 77;
    spec.dy_mean = 0.04;
    spec.dy_spread = 0.003;
    SyntheticTruth truth;
    MarketData m = generate(spec, &truth);

    int ex_days = 0;
    for (int t = 0; t < m.days(); ++t) {
        bool quarter_end = is_month_end(m.dates, t) && (m.dates[t].m % 3 == 0);
        for (int i = 0; i < m.instruments(); ++i) {
            if (quarter_end && t > 0) {
                CHECK(m.dividend(t, i) == truth.dy[i] / 4.0 * m.close(t, i));
            } else {
                CHECK(m.dividend(t, i) == 0.0);
            }
        }
        if (quarter_end && t > 0) ++ex_days;
    }
    CHECK(ex_days == 4); // Mar, Jun, Sep, Dec of the first year (plus none after)
}

TEST_CASE("two-point sigma mode splits the pool exactly in half") {
    MarketSpec spec;
    spec.n_instruments = 30;
    spec.n_days = 5;
    spec.sigma_mode = "two_point";
    spec.sigma_high = 0.8;
    spec.sigma_low = 0.2;
    SyntheticTruth truth;
    generate(spec, &truth);

    for (int i = 0; i < 30; ++i) {
        CHECK(truth.sigma[i] == (i < 15 ? 0.8 : 0.2));
        // Deciles 0-4 are the volatile half, 5-9 the quiet half.
        CHECK((truth.sigma_decile[size_t(i)] < 5) == (i < 15));
    }
}

TEST_CASE("realized moments match the planted one-factor structure") {
    MarketSpec spec;
    spec.n_instruments = 60;
    spec.n_days = 3000;
    spec.rho0 = 0.30;
    spec.seed = 314159;
    spec.dy_mean = 0.0;
    spec.dy_spread = 0.0;
    SyntheticTruth truth;
    MarketData m = generate(spec, &truth);

    const int T = m.days(), N = m.instruments();
    Eigen::MatrixXd r(T - 1, N);
    for (int t = 1; t < T; ++t)
        for (int i = 0; i < N; ++i)
            r(t - 1, i) = m.close(t, i) / m.close(t - 1, i) - 1.0;

    // Per-stock annualized volatility ~ planted sigma (sampling error
    // sigma/sqrt(2T) ~ 1.3%; 6% is a 4.5-sigma band).
    for (int i = 0; i < N; ++i) {
        double sd = std::sqrt((r.col(i).array() - r.col(i).mean()).square().sum() /
                              (T - 2) * 252.0);
        CHECK(sd == doctest::Approx(truth.sigma[i]).epsilon(0.06));
    }

    // Betas on the equi-weighted index line up with sigma_i / sigma_av.
    Eigen::VectorXd index = r.rowwise().mean();
    Eigen::VectorXd centered_index = index.array() - index.mean();
    double index_var = centered_index.squaredNorm();
    Eigen::VectorXd oracle = oracle_beta(truth.sigma);
    for (int i = 0; i < N; i += 7) {
        Eigen::VectorXd ci = r.col(i).array() - r.col(i).mean();
        double beta = ci.dot(centered_index) / index_var;
        CHECK(beta == doctest::Approx(oracle[i]).epsilon(0.12));
    }

    // A couple of pairwise correlations sit near rho0.
    std::mt19937_64 rng(4);
    for (int k = 0; k < 8; ++k) {
        int i = int(rng() % N), j = int(rng() % N);
        if (i == j) continue;
        double c = pearson(r.col(i), r.col(j));
        CHECK(c == doctest::Approx(spec.rho0).epsilon(0.30));
    }

    // Idiosyncratic variance after removing the index component.
    Eigen::VectorXd idio_oracle = oracle_idio_var(truth.sigma, spec.rho0);
    for (int i = 0; i < N; i += 11) {
        Eigen::VectorXd ci = r.col(i).array() - r.col(i).mean();
        double b = ci.dot(centered_index) / index_var;
        double resid_var = (ci - b * centered_index).squaredNorm() / (T - 2) * 252.0;
        CHECK(resid_var == doctest::Approx(idio_oracle[i]).epsilon(0.10));
    }
}

TEST_CASE("mean reversion damps multi-day variance without touching daily scale") {
    MarketSpec spec;
    spec.n_instruments = 100;
    spec.n_days = 2500;
    spec.rho0 = 0.05;
    spec.sigma_mode = "two_point";
    spec.sigma_high = 0.6;
    spec.sigma_low = 0.4;
    spec.seed = 218;
    spec.dy_mean = 0.0;
    spec.dy_spread = 0.0;
    spec.mean_reversion = 0.30;
    SyntheticTruth truth;
    MarketData m = generate(spec, &truth);

    // Pool across instruments in units of each one's own daily variance.
    const int T = m.days(), N = m.instruments();
    double daily_var = 0.0, ten_day_var = 0.0;
    long n1 = 0, n10 = 0;
    for (int i = 0; i < N; ++i) {
        double sd2 = truth.sigma[i] * truth.sigma[i] / 252.0;
        for (int t = 1; t < T; ++t) {
            double r = std::log(m.close(t, i) / m.close(t - 1, i));
            daily_var += r * r / sd2;
            ++n1;
        }
        for (int t = 10; t < T; t += 10) {
            double r = std::log(m.close(t, i) / m.close(t - 10, i));
            ten_day_var += r * r / sd2;
            ++n10;
        }
    }
    daily_var /= double(n1);
    ten_day_var /= double(n10);

    CHECK(daily_var == doctest::Approx(1.0).epsilon(0.05));

    // Stationary OU increments: Var(k-day)/(k Var(1-day)) =
    // (1 - e^{-k kappa}) / (k (1 - e^{-kappa})) ~ 0.37 for kappa = 0.3, k = 10.
    double expected = (1.0 - std::exp(-10 * 0.30)) / (10.0 * (1.0 - std::exp(-0.30)));
    CHECK(ten_day_var / (10.0 * daily_var) == doctest::Approx(expected).epsilon(0.15));
}

TEST_CASE("student-t innovations fatten the tails") {
    MarketSpec spec;
    spec.n_instruments = 40;
    spec.n_days = 3000;
    spec.rho0 = 0.05;
    spec.seed = 55;
    spec.dy_mean = 0.0;
    spec.dy_spread = 0.0;

    // Standardize each instrument by its own sample std before pooling:
    // raw pooling mixes the volatility cross-section, which is leptokurtic
    // even with Gaussian innovations.
    auto pooled_kurtosis = [](const MarketData& m) {
        double s2 = 0, s4 = 0;
        long n = 0;
        for (int i = 0; i < m.instruments(); ++i) {
            std::vector<double> rs;
            rs.reserve(size_t(m.days()));
            for (int t = 1; t < m.days(); ++t)
                rs.push_back(m.close(t, i) / m.close(t - 1, i) - 1.0);
            double mean = 0;
            for (double r : rs) mean += r;
            mean /= double(rs.size());
            double var = 0;
            for (double r : rs) var += (r - mean) * (r - mean);
            var /= double(rs.size());
            for (double r : rs) {
                double z = (r - mean) / std::sqrt(var);
                s2 += z * z;
                s4 += z * z * z * z;
                ++n;
            }
        }
        s2 /= double(n);
        s4 /= double(n);
        return s4 / (s2 * s2);
    };

    MarketData gauss = generate(spec);
    spec.student_t_df = 5;
    MarketData heavy = generate(spec);

    CHECK(pooled_kurtosis(gauss) < 3.6);
    CHECK(pooled_kurtosis(heavy) > 4.5);
}

TEST_CASE("generation rejects malformed requests") {
    MarketSpec spec;
    spec.n_instruments = 5;
    CHECK_THROWS_AS(generate(spec), DomainError);

    spec = MarketSpec{};
    spec.rho0 = 1.0;
    CHECK_THROWS_AS(generate(spec), DomainError);

    spec = MarketSpec{};
    spec.sigma_shape = 3.0;
    CHECK_THROWS_WITH_AS(generate(spec), doctest::Contains("sigma_shape"), DomainError);

    spec = MarketSpec{};
    spec.decile_drifts = {0.1, 0.2};
    CHECK_THROWS_WITH_AS(generate(spec), doctest::Contains("decile_drifts"), DomainError);

    spec = MarketSpec{};
    spec.student_t_df = 2;
    CHECK_THROWS_AS(generate(spec), DomainError);
}
