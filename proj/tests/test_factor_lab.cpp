#include "lowvol/factor_lab.hpp"
#include "lowvol/errors.hpp"
#include "lowvol/synthetic_market.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

using namespace lowvol;
namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path dir;
    Scratch() {
        dir = fs::temp_directory_path() /
              ("lowvol_flab_" + std::to_string(::getpid()) + "_" +
               std::to_string(counter++));
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    std::string file(const std::string& name, const std::string& content) const {
        std::string path = (dir / name).string();
        std::ofstream out(path);
        out << content;
        return path;
    }
    static int counter;
};
int Scratch::counter = 0;

MonthlySeries series_of(std::vector<int> keys, std::vector<double> values) {
    MonthlySeries ms;
    ms.month_keys = std::move(keys);
    ms.values = Eigen::Map<Eigen::VectorXd>(values.data(), long(values.size()));
    return ms;
}

// Random monthly series over `m` consecutive months starting 2010-01.
MonthlySeries random_series(int m, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<int> keys;
    std::vector<double> values;
    int y = 2010, mo = 1;
    for (int k = 0; k < m; ++k) {
        keys.push_back(y * 100 + mo);
        values.push_back(g(rng));
        if (++mo == 13) { mo = 1; ++y; }
    }
    return series_of(std::move(keys), std::move(values));
}

} // namespace

TEST_CASE("monthly sums drop months the series only partially covers") {
    MarketData m;
    m.dates = weekday_calendar(Date{2020, 1, 1}, 90); // Jan..early May 2020

    PnlSeries pnl;
    pnl.total = Eigen::VectorXd::Ones(90);
    pnl.price = pnl.dividend = pnl.financing = Eigen::VectorXd::Zero(90);
    pnl.first = 5;       // mid-January: January is partial
    pnl.last = 88;       // one day short of the end: that month still complete?

    MonthlySeries ms = monthly_sums(pnl, m);

    // January is dropped (day 4 is still January); the last month is dropped
    // only if day 89 extends it.
    REQUIRE(!ms.month_keys.empty());
    CHECK(ms.month_keys.front() == 202002);
    if (m.dates[89].month_key() == m.dates[88].month_key())
        CHECK(ms.month_keys.back() < m.dates[88].month_key());

    // Every reported month's sum equals its trading-day count.
    for (size_t k = 0; k < ms.month_keys.size(); ++k) {
        int count = 0;
        for (int t = 0; t < 90; ++t)
            if (m.dates[t].month_key() == ms.month_keys[k]) ++count;
        CHECK(ms.values[long(k)] == double(count));
    }
}

TEST_CASE("correlation table works on the common-month intersection") {
    std::mt19937_64 rng(8);
    MonthlySeries a = random_series(40, rng);
    MonthlySeries b = random_series(40, rng);

    // Make b a known mix of a plus noise, shifted by dropping some months.
    for (int k = 0; k < 40; ++k) b.values[k] = 0.8 * a.values[k] + 0.2 * b.values[k];
    MonthlySeries b_cut = b;
    b_cut.month_keys.erase(b_cut.month_keys.begin(), b_cut.month_keys.begin() + 6);
    Eigen::VectorXd tail = b_cut.values.tail(34).eval();
    b_cut.values = tail;

    CorrelationTable table = pnl_correlation({{"A", a}, {"B", b_cut}});
    CHECK(table.n_months == 34);
    CHECK(table.corr(0, 0) == 1.0);
    CHECK(table.corr(1, 1) == 1.0);
    CHECK(table.corr(0, 1) == table.corr(1, 0));

    // Oracle on the aligned tail.
    Eigen::VectorXd x = a.values.tail(34).eval(), y = b_cut.values;
    Eigen::VectorXd dx = x.array() - x.mean(), dy = y.array() - y.mean();
    double expected = dx.dot(dy) / std::sqrt(dx.squaredNorm() * dy.squaredNorm());
    CHECK(table.corr(0, 1) == doctest::Approx(expected).epsilon(1e-14));

    MonthlySeries tiny = random_series(20, rng);
    CHECK_THROWS_WITH_AS(pnl_correlation({{"A", tiny}, {"B", tiny}}),
                         doctest::Contains("24"), DomainError);
}

TEST_CASE("residualization reproduces the normal equations") {
    std::mt19937_64 rng(17);
    const int M = 120;
    MonthlySeries f1 = random_series(M, rng);
    MonthlySeries f2 = random_series(M, rng);
    MonthlySeries target = random_series(M, rng, 0.5);
    for (int k = 0; k < M; ++k)
        target.values[k] += 0.003 + 1.3 * f1.values[k] - 0.4 * f2.values[k];

    ResidualReport rep = residualize(target, {{"F1", f1}, {"F2", f2}});

    // Oracle: solve [1 X]' [1 X] b = [1 X]' y directly.
    Eigen::MatrixXd D(M, 3);
    D.col(0).setOnes();
    D.col(1) = f1.values;
    D.col(2) = f2.values;
    Eigen::VectorXd beta = (D.transpose() * D).ldlt().solve(D.transpose() * target.values);

    CHECK(rep.intercept == doctest::Approx(beta[0]).epsilon(1e-10));
    CHECK(rep.coefficients[0] == doctest::Approx(beta[1]).epsilon(1e-10));
    CHECK(rep.coefficients[1] == doctest::Approx(beta[2]).epsilon(1e-10));

    // The intercept is stripped along with the slopes, so a fully explained
    // target leaves a zero-mean residual; the alpha lives in the report.
    CHECK(rep.residual.values.mean() == doctest::Approx(0.0).epsilon(1e-12));

    // And it is exactly orthogonal to the regressors.
    CHECK(rep.residual_regressor_corr.cwiseAbs().maxCoeff() < 1e-12);

    // Residual values match y - [1 X] b elementwise.
    Eigen::VectorXd expected = target.values - D * beta;
    CHECK((rep.residual.values - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("an empty regressor set passes the target through") {
    std::mt19937_64 rng(5);
    MonthlySeries t = random_series(48, rng);
    ResidualReport rep = residualize(t, {});
    CHECK(rep.residual.month_keys == t.month_keys);
    CHECK((rep.residual.values - t.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK(rep.intercept == doctest::Approx(t.values.mean()).epsilon(1e-14));
}

TEST_CASE("rolling residualization tracks a coefficient break") {
    std::mt19937_64 rng(29);
    const int M = 96;
    MonthlySeries f = random_series(M, rng);
    MonthlySeries target = random_series(M, rng, 0.05);
    // Loading flips sign halfway: one full-sample slope fits neither half.
    for (int k = 0; k < M; ++k)
        target.values[k] += (k < M / 2 ? 1.0 : -1.0) * f.values[k];

    ResidualReport full = residualize(target, {{"F", f}});
    ResidualReport roll = residualize(target, {{"F", f}}, 24);

    CHECK(roll.window_months == 24);
    CHECK(roll.residual.values.size() == M);

    // Away from the break the rolling fit adapts; the residual shrinks.
    double full_var = full.residual.values.tail(24).squaredNorm();
    double roll_var = roll.residual.values.tail(24).squaredNorm();
    CHECK(roll_var < 0.2 * full_var);

    CHECK_THROWS_AS(residualize(target, {{"F", f}}, 12), ConfigError);
}

TEST_CASE("collinear regressors fail loudly and name the worst pair") {
    std::mt19937_64 rng(41);
    MonthlySeries a = random_series(60, rng);
    MonthlySeries b = a;
    for (int k = 0; k < 60; ++k) b.values[k] = 2.0 * a.values[k]; // exact multiple
    MonthlySeries c = random_series(60, rng);
    MonthlySeries target = random_series(60, rng);

    CHECK_THROWS_WITH_AS(
        residualize(target, {{"ALPHA", a}, {"OTHER", c}, {"DOUBLE", b}}),
        doctest::Contains("ALPHA / DOUBLE"), DomainError);
}

TEST_CASE("factor catalogue rejects unknown names with the known list") {
    CHECK(factor_definition("LOWVOL").metric.empty());
    CHECK(factor_definition("SMB").metric == "cap");
    CHECK_FALSE(factor_definition("SMB").ascending); // long the small names
    CHECK(factor_definition("DP").metric == "dp");
    CHECK_THROWS_WITH_AS(factor_definition("VALUE"), doctest::Contains("LOWVOL"),
                         DomainError);
}

TEST_CASE("a metric feed of sigma reproduces the volatility strategy bitwise") {
    MarketSpec spec;
    spec.n_instruments = 40;
    spec.n_days = 460;
    spec.seed = 606;
    MarketData m = generate(spec);
    ReturnPanel panel = compute_returns(m, ReturnMode::total);
    RiskFreeCurve rates = flat_rates(m, 0.01);

    EstimatorWindows w;
    w.corr_window = 300;
    RollingEstimators est(panel, m, w);

    StrategyConfig cfg;
    cfg.windows = w;
    cfg.kind = StrategyKind::lowvol;
    StrategyRun direct = run_strategy(m, panel, rates, est, cfg);

    StrategyConfig via_metric = cfg;
    via_metric.kind = StrategyKind::metric;
    via_metric.metric_ascending = false; // high sigma -> short, same as lowvol
    via_metric.metric_name = "sigma feed";
    via_metric.metric_at = [&](int t) { return est.sigma_at(t); };
    StrategyRun indirect = run_strategy(m, panel, rates, est, via_metric);

    REQUIRE(direct.positions.size() == indirect.positions.size());
    for (size_t k = 0; k < direct.positions.size(); ++k)
        CHECK((direct.positions[k].x.array() == indirect.positions[k].x.array()).all());
    CHECK((direct.pnl.total.array() == indirect.pnl.total.array()).all());
}

TEST_CASE("metric tables forward-fill and enforce pool coverage") {
    Scratch s;
    MarketSpec spec;
    spec.n_instruments = 12;
    spec.n_days = 80;
    spec.seed = 7;
    MarketData m = generate(spec);

    // One metric, published twice for most instruments; id SYN0003 only once.
    std::string csv = "date,instrument,metric,value\n";
    for (int i = 0; i < 12; ++i) {
        if (i != 3)
            csv += to_string(m.dates[10]) + "," + m.ids[size_t(i)] + ",score," +
                   std::to_string(i) + "\n";
        csv += to_string(m.dates[50]) + "," + m.ids[size_t(i)] + ",score," +
               std::to_string(10 * i) + "\n";
    }
    MetricTable table = load_metrics(s.file("metrics.csv", csv), m);

    REQUIRE(table.has("score"));
    Eigen::VectorXd before = table.at("score", 9);
    CHECK(std::isnan(before[0])); // nothing published yet

    Eigen::VectorXd mid = table.at("score", 30); // as-of: carries the day-10 print
    CHECK(mid[0] == 0.0);
    CHECK(mid[5] == 5.0);
    CHECK(std::isnan(mid[3]));

    Eigen::VectorXd late = table.at("score", 79);
    CHECK(late[3] == 30.0);
    CHECK(late[11] == 110.0);

    std::vector<int> universe{0, 1, 2, 3};
    CHECK(table.coverage("score", 30, universe) == doctest::Approx(0.75));
    CHECK_THROWS_AS(table.at("nope", 30), DomainError);
}

TEST_CASE("trailing yield matches the hand sum of a year of dividends") {
    MarketSpec spec;
    spec.n_instruments = 10;
    spec.n_days = 300;
    spec.seed = 99;
    spec.dy_mean = 0.05;
    spec.dy_spread = 0.004;
    MarketData m = generate(spec);

    int t = 280;
    Eigen::VectorXd y = trailing_yield_at(m, t);
    for (int i = 0; i < 10; ++i) {
        double divs = 0.0;
        for (int u = t - 251; u <= t; ++u) divs += m.dividend(u, i);
        CHECK(y[i] == doctest::Approx(divs / m.close(t, i)).epsilon(1e-14));
        CHECK(y[i] > 0.0); // four quarterly lumps inside the window
    }
    CHECK(std::isnan(trailing_yield_at(m, 100)[0])); // window still short
}

TEST_CASE("yield deciles sort by yield and inherit the planted beta tilt") {
    MarketSpec spec;
    spec.n_instruments = 200;
    spec.n_days = 800;
    spec.seed = 1212;
    spec.rho0 = 0.30;
    spec.dy_link = -0.7; // high yield <-> low sigma <-> low beta
    spec.dy_mean = 0.04;
    spec.dy_spread = 0.01;
    MarketData m = generate(spec);
    ReturnPanel panel = compute_returns(m, ReturnMode::total);

    DyDecileReport rep = dy_decile_betas(
        m, panel, [&](int t) { return trailing_yield_at(m, t); }, 300);

    for (int d = 1; d < 10; ++d) CHECK(rep.avg_dy[size_t(d)] > rep.avg_dy[size_t(d - 1)]);
    CHECK(rep.beta[9] < rep.beta[0]); // top-yield decile is the defensive one
    CHECK(rep.beta[0] > 1.0);
    CHECK(rep.beta[9] < 1.0);
}

TEST_CASE("holdings bias sees a planted low-volatility tilt") {
    Scratch s;
    MarketSpec spec;
    spec.n_instruments = 30;
    spec.n_days = 420;
    spec.seed = 31;
    SyntheticTruth truth;
    MarketData m = generate(spec, &truth);
    ReturnPanel panel = compute_returns(m, ReturnMode::total);
    EstimatorWindows w;
    RollingEstimators est(panel, m, w);

    // Two funds long the ten least volatile names on two snapshot dates.
    std::vector<int> order(30);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return truth.sigma[a] < truth.sigma[b]; });
    std::string csv = "date,fund,instrument,dollar_value\n";
    for (int t : {200, 300})
        for (const char* fund : {"F1", "F2"})
            for (int k = 0; k < 10; ++k)
                csv += to_string(m.dates[t]) + "," + fund + "," +
                       m.ids[size_t(order[size_t(k)])] + ",100\n";
    std::string holdings = s.file("holdings.csv", csv);

    std::map<std::string, std::function<Eigen::VectorXd(int)>> signals{
        {"sigma", [&](int t) { return est.sigma_at(t); }}};

    HoldingsBiasReport rep = holdings_bias(holdings, m, signals, nullptr,
                                           HoldingsNormalization::by_fund_total);
    REQUIRE(rep.sample_days == std::vector<int>{200, 300});
    REQUIRE(rep.correlation.at("sigma").size() == 2);
    CHECK(rep.correlation.at("sigma")[0] < -0.3); // overweight = low sigma
    CHECK(rep.correlation.at("sigma")[1] < -0.3);

    // Cap normalization needs the cap metric.
    CHECK_THROWS_AS(holdings_bias(holdings, m, signals, nullptr,
                                  HoldingsNormalization::by_market_cap),
                    DomainError);
}
