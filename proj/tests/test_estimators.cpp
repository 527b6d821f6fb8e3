#include "lowvol/estimators.hpp"
#include "lowvol/errors.hpp"
#include "lowvol/synthetic_market.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace lowvol;

namespace {

// Naive rank oracle: sort a copy, assign midranks by scanning tie groups.
// Deliberately written differently from the production code.
std::vector<double> midranks(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return v[size_t(a)] < v[size_t(b)]; });
    std::vector<double> rank(v.size());
    int k = 0;
    while (k < n) {
        int j = k;
        while (j + 1 < n && v[size_t(order[size_t(j + 1)])] == v[size_t(order[size_t(k)])]) ++j;
        double mid = (k + j) / 2.0 + 1.0; // 1-based average rank of the tie group
        for (int t = k; t <= j; ++t) rank[size_t(order[size_t(t)])] = mid;
        k = j + 1;
    }
    return rank;
}

MarketData quiet_market(int n, int days, std::uint64_t seed) {
    MarketSpec spec;
    spec.n_instruments = n;
    spec.n_days = days;
    spec.seed = seed;
    spec.dy_mean = 0.0;
    spec.dy_spread = 0.0;
    return generate(spec);
}

} // namespace

TEST_CASE("rank signal matches a naive midrank oracle and is zero-sum") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::bernoulli_distribution tie(0.3), drop(0.15);

    for (int trial = 0; trial < 50; ++trial) {
        int n = 5 + int(rng() % 60);
        Eigen::VectorXd values(n);
        std::vector<unsigned char> valid(size_t(n), 1);
        for (int i = 0; i < n; ++i) {
            values[i] = tie(rng) ? 1.0 : u(rng); // force tie groups
            if (drop(rng)) valid[size_t(i)] = 0;
        }
        int n_valid = int(std::count(valid.begin(), valid.end(), 1));
        if (n_valid < 2) continue;

        SignalVector sig = rank_signal(values, valid, true);

        std::vector<double> sub;
        for (int i = 0; i < n; ++i)
            if (valid[size_t(i)]) sub.push_back(values[i]);
        std::vector<double> rank = midranks(sub);

        double sum = 0.0;
        int k = 0;
        for (int i = 0; i < n; ++i) {
            if (!valid[size_t(i)]) {
                CHECK(sig.score[i] == 0.0);
                continue;
            }
            double expected = (2.0 * rank[size_t(k++)] - (n_valid + 1)) / (n_valid - 1);
            CHECK(sig.score[i] == doctest::Approx(expected).epsilon(1e-14));
            CHECK(std::abs(sig.score[i]) <= 1.0 + 1e-14);
            sum += sig.score[i];
        }
        CHECK(sum == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("rank signal is invariant under strictly monotone transforms") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.1, 4.0);
    Eigen::VectorXd v(40);
    for (int i = 0; i < 40; ++i) v[i] = u(rng);
    std::vector<unsigned char> valid(40, 1);

    SignalVector base = rank_signal(v, valid, true);
    SignalVector logs = rank_signal(v.array().log().matrix(), valid, true);
    SignalVector cubes = rank_signal(v.array().cube().matrix(), valid, true);
    // Descending on v == ascending on -v.
    SignalVector desc = rank_signal(-v, valid, false);

    for (int i = 0; i < 40; ++i) {
        CHECK(base.score[i] == logs.score[i]);
        CHECK(base.score[i] == cubes.score[i]);
        CHECK(base.score[i] == desc.score[i]);
    }

    SignalVector flat = rank_signal(Eigen::VectorXd::Ones(5), {1, 1, 1, 1, 1}, true);
    CHECK(flat.score.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sector ranks are independent per sector and still zero-sum") {
    Eigen::VectorXd v(7);
    v << 3, 1, 2, 10, 30, 20, 5;
    std::vector<unsigned char> valid(7, 1);
    std::vector<std::string> sectors{"a", "a", "a", "b", "b", "b", "solo"};

    SignalVector sig = sector_rank_signal(v, valid, sectors, true);

    // Each sector ranks on its own scale; a one-member sector scores 0.
    CHECK(sig.score[0] == doctest::Approx(1.0));
    CHECK(sig.score[1] == doctest::Approx(-1.0));
    CHECK(sig.score[2] == doctest::Approx(0.0));
    CHECK(sig.score[3] == doctest::Approx(-1.0));
    CHECK(sig.score[4] == doctest::Approx(1.0));
    CHECK(sig.score[5] == doctest::Approx(0.0));
    CHECK(sig.score[6] == 0.0);
    CHECK(sig.score.sum() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rolling sigma equals the brute-force lagged window std") {
    MarketData m = quiet_market(10, 320, 5150);
    ReturnPanel panel = compute_returns(m, ReturnMode::total);
    EstimatorWindows w;
    w.vol_window = 60;
    w.lag = 15;
    RollingEstimators est(panel, m, w);

    int t = 250;
    Eigen::VectorXd sigma = est.sigma_at(t);
    for (int i = 0; i < m.instruments(); ++i) {
        // Window of w.vol_window returns ending at t - lag, inclusive.
        double sum = 0, sum2 = 0;
        for (int k = 0; k < w.vol_window; ++k) {
            double r = panel.r(t - w.lag - k, i);
            sum += r;
            sum2 += r * r;
        }
        double var = (sum2 - sum * sum / w.vol_window) / (w.vol_window - 1);
        CHECK(sigma[i] ==
              doctest::Approx(std::sqrt(var * 252.0)).epsilon(1e-12));
    }

    // Too early: the window cannot be filled.
    Eigen::VectorXd early = est.sigma_at(w.vol_window + w.lag - 2);
    CHECK(std::isnan(early[0]));
}

TEST_CASE("rolling beta equals an explicit block-return regression") {
    MarketData m = quiet_market(10, 400, 99);
    ReturnPanel panel = compute_returns(m, ReturnMode::total);
    EstimatorWindows w;
    w.beta_window = 50;
    w.beta_block = 3;
    w.lag = 10;
    RollingEstimators est(panel, m, w);

    int t = 350;
    Eigen::VectorXd beta = est.beta_at(t);

    // The index itself is the equi-weighted mean over that day's members.
    for (int tt : {50, 200, 349}) {
        double sum = 0;
        int cnt = 0;
        for (int i : m.members[size_t(tt)])
            if (panel.ok(tt, i)) {
                sum += panel.r(tt, i);
                ++cnt;
            }
        CHECK(est.index_return(tt) == doctest::Approx(sum / cnt).epsilon(1e-14));
    }

    // Oracle: overlapping 3-day compounded returns for stock and index, last
    // block ending at t - lag, slope = cov/var with sample means removed.
    auto block = [&](auto&& daily, int end) {
        double g = 1.0;
        for (int k = 0; k < w.beta_block; ++k) g *= 1.0 + daily(end - k);
        return g - 1.0;
    };
    for (int i = 0; i < m.instruments(); ++i) {
        std::vector<double> xs, ys;
        for (int b = 0; b < w.beta_window; ++b) {
            int end = t - w.lag - b;
            xs.push_back(block([&](int tt) { return est.index_return(tt); }, end));
            ys.push_back(block([&](int tt) { return panel.r(tt, i); }, end));
        }
        double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
        double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
        double sxy = 0, sxx = 0;
        for (size_t k = 0; k < xs.size(); ++k) {
            sxy += (xs[k] - mx) * (ys[k] - my);
            sxx += (xs[k] - mx) * (xs[k] - mx);
        }
        CHECK(beta[i] == doctest::Approx(sxy / sxx).epsilon(1e-10));
    }
}

TEST_CASE("estimates at t ignore everything after t - lag") {
    MarketData m = quiet_market(10, 260, 1234);
    ReturnPanel panel = compute_returns(m, ReturnMode::total);
    EstimatorWindows w;
    w.vol_window = 80;
    w.beta_window = 40;
    w.lag = 20;

    int t = 220;
    RollingEstimators clean(panel, m, w);
    Eigen::VectorXd sigma0 = clean.sigma_at(t);
    Eigen::VectorXd beta0 = clean.beta_at(t);

    // Corrupt every return strictly after the signal's data horizon.
    ReturnPanel bent = panel;
    for (int tt = t - w.lag + 1; tt < m.days(); ++tt)
        bent.r.row(tt).array() += 0.5;
    RollingEstimators dirty(bent, m, w);

    Eigen::VectorXd sigma1 = dirty.sigma_at(t);
    Eigen::VectorXd beta1 = dirty.beta_at(t);
    for (int i = 0; i < m.instruments(); ++i) {
        CHECK(sigma0[i] == sigma1[i]);
        CHECK(beta0[i] == beta1[i]);
    }
}

TEST_CASE("spike model reproduces a planted constant-correlation matrix") {
    // With every pair at correlation rho, the leading eigenpair is known in
    // closed form: lambda0 = 1 + (n-1) rho on the flat vector, and the
    // trace-preserving bulk equals the true bulk eigenvalue 1 - rho.
    const int n = 40;
    const double rho = 0.35;
    Eigen::VectorXd flat = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(double(n)));
    CorrelationModel model = make_spike_model(1.0 + (n - 1) * rho, flat);

    CHECK(model.eps2 == doctest::Approx(1.0 - rho).epsilon(1e-14));

    Eigen::MatrixXd truth = Eigen::MatrixXd::Constant(n, n, rho);
    truth.diagonal().setOnes();
    CHECK((model.dense_matrix() - truth).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((model.dense_inverse() - truth.inverse()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("estimated spike model recovers the planted factor structure") {
    MarketSpec spec;
    spec.n_instruments = 120;
    spec.n_days = 1100;
    spec.rho0 = 0.40;
    spec.seed = 2718;
    spec.dy_mean = 0.0;
    MarketData m = generate(spec);
    ReturnPanel panel = compute_returns(m, ReturnMode::total);

    EstimatorWindows w;
    w.corr_window = 1008;
    CorrelationModel est = estimate_correlation(panel, m, m.days() - 1, w,
                                                CorrelationModel::Mode::spike);

    REQUIRE(est.n() == 120);
    // lambda0/n estimates rho0 up to sampling noise (T/n ~ 8 here).
    CHECK(est.lambda0 / 120.0 == doctest::Approx(spec.rho0).epsilon(0.10));
    // The market mode of an equal-correlation world is flat.
    double overlap = std::abs(
        est.v0.dot(Eigen::VectorXd::Constant(120, 1.0 / std::sqrt(120.0))));
    CHECK(overlap > 0.99);
    CHECK(est.eps2 == doctest::Approx((120.0 - est.lambda0) / 119.0).epsilon(1e-12));
}

TEST_CASE("spike estimation enforces the coverage floor") {
    MarketData m = quiet_market(12, 400, 555);
    ReturnPanel panel = compute_returns(m, ReturnMode::total);
    EstimatorWindows w;
    w.corr_window = 300;
    w.min_coverage = 0.6;

    // Invalidate most of one instrument's window: it must drop out.
    for (int t = 120; t < 400; ++t) panel.valid(t, 3) = 0;
    CorrelationModel est = estimate_correlation(panel, m, 399, w,
                                                CorrelationModel::Mode::spike);
    CHECK(est.n() == 11);
    CHECK(std::find(est.included.begin(), est.included.end(), 3) == est.included.end());
}

TEST_CASE("make_spike_model rejects out-of-range leading eigenvalues") {
    Eigen::VectorXd flat = Eigen::VectorXd::Constant(10, 1.0 / std::sqrt(10.0));
    CHECK_THROWS_AS(make_spike_model(0.0, flat), DomainError);
    CHECK_THROWS_AS(make_spike_model(-2.0, flat), DomainError);
    CHECK_THROWS_AS(make_spike_model(9.9, flat), DomainError); // > 0.95 n
    CHECK_NOTHROW(make_spike_model(9.0, flat));
}
