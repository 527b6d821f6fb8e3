// Command-line front end: every run is a pure function of config + seed and
// echoes its effective config next to the outputs.
#include "lowvol/backtest.hpp"
#include "lowvol/checks.hpp"
#include "lowvol/config.hpp"
#include "lowvol/csv.hpp"
#include "lowvol/errors.hpp"
#include "lowvol/factor_lab.hpp"
#include "lowvol/strategy.hpp"
#include "lowvol/synthetic_market.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lowvol;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string strategy;
    std::optional<double> tax;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool strategy_flags) {
    cmd->add_option("--config", args.config_path, "config JSON file")->required();
    cmd->add_option("--set", args.sets,
                    "override a config key, e.g. --set synthetic.seed=7 (repeatable)");
    cmd->add_option("--seed", args.seed, "override synthetic.seed");
    cmd->add_option("--out", args.out, "output directory (overrides config 'output')");
    if (strategy_flags) {
        cmd->add_option("--strategy", args.strategy,
                        "strategy kind: lowvol | lowbeta | sector_lowvol");
        cmd->add_option("--tax", args.tax, "dividend tax rate in [0, 1]");
    }
}

RunConfig resolve(const CommonArgs& args) {
    std::vector<std::string> sets = args.sets; // flags win over --set
    if (args.seed) sets.push_back("synthetic.seed=" + std::to_string(*args.seed));
    if (!args.strategy.empty()) sets.push_back("strategy.kind=" + args.strategy);
    if (args.tax) sets.push_back("strategy.dividend_tax=" + fmt_full(*args.tax));
    if (!args.out.empty()) sets.push_back("output=" + args.out);
    return load_config(args.config_path, sets);
}

// Inputs materialized once per run, from files or from the generator.
struct Inputs {
    MarketData m;
    SyntheticTruth truth;
    bool has_truth = false;
    ReturnPanel panel;
    RiskFreeCurve rates;
    std::optional<MetricTable> metrics;
};

Inputs materialize(const RunConfig& cfg, const std::string& out_dir) {
    Inputs in;
    if (cfg.use_synthetic) {
        in.m = generate(cfg.market, &in.truth);
        in.has_truth = true;
        in.rates = flat_rates(in.m, cfg.market.annual_rate);
        // Fundamentals derived from the generated market, written out so the
        // run's inputs are inspectable, then read back through the normal path.
        fs::create_directories(out_dir);
        std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
        write_metrics_csv(in.m, in.truth, metrics_path);
        in.metrics = load_metrics(metrics_path, in.m);
    } else {
        in.m = load_panel(cfg.prices, cfg.dividends, cfg.membership, cfg.sectors);
        in.rates = cfg.rates.empty() ? flat_rates(in.m, 0.0) : load_rates(cfg.rates, in.m);
        if (!cfg.metrics.empty()) in.metrics = load_metrics(cfg.metrics, in.m);
    }
    in.panel = compute_returns(in.m, ReturnMode::total);
    return in;
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
    write_file_atomic((fs::path(out_dir) / "config.json").string(),
                      cfg.effective.dump(2) + "\n");
}

json stats_json(const PerfStats& s) {
    return json{{"mean_daily", s.mean_daily}, {"std_daily", s.std_daily},
                {"sharpe", s.sharpe},         {"t_stat", s.t_stat},
                {"skewness", s.skewness},     {"n_days", s.n_days}};
}

void write_pnl_csv(const PnlSeries& pnl, const MarketData& m, const std::string& path) {
    std::ostringstream out;
    out << "date,total,price,dividend,financing\n";
    for (int t = pnl.first; t <= pnl.last; ++t)
        out << to_string(m.dates[t]) << ',' << fmt_full(pnl.total[t]) << ','
            << fmt_full(pnl.price[t]) << ',' << fmt_full(pnl.dividend[t]) << ','
            << fmt_full(pnl.financing[t]) << '\n';
    write_file_atomic(path, out.str());
}

void write_monthly_csv(const std::vector<std::pair<std::string, MonthlySeries>>& series,
                       const std::string& path) {
    std::ostringstream out;
    out << "month,factor,value\n";
    for (const auto& [name, ms] : series)
        for (size_t k = 0; k < ms.month_keys.size(); ++k)
            out << ms.month_keys[k] << ',' << name << ',' << fmt_full(ms.values[long(k)])
                << '\n';
    write_file_atomic(path, out.str());
}

// ---- backtest ----------------------------------------------------------------

int cmd_backtest(const CommonArgs& args) {
    RunConfig cfg = resolve(args);
    Inputs in = materialize(cfg, cfg.output_dir);
    fs::create_directories(cfg.output_dir);

    RollingEstimators est(in.panel, in.m, cfg.strategy.windows);
    StrategyRun run = run_strategy(in.m, in.panel, in.rates, est, cfg.strategy);

    write_pnl_csv(run.pnl, in.m, (fs::path(cfg.output_dir) / "pnl.csv").string());

    {
        std::ostringstream out;
        out << "date,instrument,dollars\n";
        for (const auto& pos : run.positions)
            for (int i = 0; i < in.m.instruments(); ++i)
                if (pos.x[i] != 0.0)
                    out << to_string(in.m.dates[pos.date_index]) << ',' << in.m.ids[size_t(i)]
                        << ',' << fmt_full(pos.x[i]) << '\n';
        write_file_atomic((fs::path(cfg.output_dir) / "positions.csv").string(), out.str());
    }
    {
        std::ostringstream out;
        out << "date,nmv,gmv,market_exposure_pre,market_exposure_post,lambda0,"
               "v0_flat_overlap,n_active\n";
        for (const auto& d : run.diagnostics)
            out << to_string(in.m.dates[d.date_index]) << ',' << fmt_full(d.nmv) << ','
                << fmt_full(d.gmv) << ',' << fmt_full(d.market_exposure_pre) << ','
                << fmt_full(d.market_exposure_post) << ',' << fmt_full(d.lambda0) << ','
                << fmt_full(d.v0_flat_overlap) << ',' << d.n_active << '\n';
        write_file_atomic((fs::path(cfg.output_dir) / "diagnostics.csv").string(),
                          out.str());
    }
    {
        StrategyStats st = strategy_stats(run.pnl);
        AttributionRatio attr = dividend_attribution(run.pnl);
        json doc{{"financed", stats_json(st.financed)},
                 {"unfinanced", stats_json(st.unfinanced)},
                 {"dividend_attribution",
                  {{"financed", attr.financed}, {"unfinanced", attr.unfinanced}}},
                 {"first_date", to_string(in.m.dates[run.pnl.first])},
                 {"last_date", to_string(in.m.dates[run.pnl.last])}};
        write_file_atomic((fs::path(cfg.output_dir) / "stats.json").string(),
                          doc.dump(2) + "\n");
    }
    echo_config(cfg, cfg.output_dir);
    std::cout << "backtest written to " << cfg.output_dir << "\n";
    return 0;
}

// ---- deciles -----------------------------------------------------------------

int cmd_deciles(const CommonArgs& args) {
    RunConfig cfg = resolve(args);
    Inputs in = materialize(cfg, cfg.output_dir);
    fs::create_directories(cfg.output_dir);

    RollingEstimators est(in.panel, in.m, cfg.strategy.windows);
    DecileReport deciles = decile_portfolios(est, in.panel, in.m, in.rates);
    ReturnPanel price_panel = compute_returns(in.m, ReturnMode::price);
    CompoundingReport comp = compounding_ratio(est, price_panel, in.m);
    UpDownReport updown = updown_differential(deciles, est);
    DyVolReport dyvol = dy_vol_correlation(in.m, in.panel);

    {
        std::ostringstream out;
        out << "decile,information_ratio,sharpe,skewness,mean_1d,mean_5d,mean_10d,"
               "mean_20d,avg_size\n";
        for (int d = 0; d < 10; ++d) {
            const auto& row = deciles.rows[size_t(d)];
            out << (d + 1) << ',' << fmt_full(row.information_ratio) << ','
                << fmt_full(row.sharpe) << ',' << fmt_full(row.skewness);
            for (double v : row.mean_nday) out << ',' << fmt_full(v);
            out << ',' << fmt_full(row.avg_size) << '\n';
        }
        write_file_atomic((fs::path(cfg.output_dir) / "deciles.csv").string(), out.str());
    }
    {
        std::ostringstream out;
        out << "horizon,decile1_mean,decile10_mean,ratio\n";
        for (size_t h = 0; h < comp.horizons.size(); ++h)
            out << comp.horizons[h] << ',' << fmt_full(comp.decile1_mean[h]) << ','
                << fmt_full(comp.decile10_mean[h]) << ',' << fmt_full(comp.ratio[h])
                << '\n';
        write_file_atomic((fs::path(cfg.output_dir) / "compounding.csv").string(),
                          out.str());
    }
    {
        std::ostringstream out;
        out << "bin,mean_sigma,mean_yield\n";
        for (size_t b = 0; b < dyvol.binned.size(); ++b)
            out << (b + 1) << ',' << fmt_full(dyvol.binned[b].first) << ','
                << fmt_full(dyvol.binned[b].second) << '\n';
        write_file_atomic((fs::path(cfg.output_dir) / "yield_vol_bins.csv").string(),
                          out.str());
    }
    {
        json doc{{"updown",
                  {{"ratio", updown.ratio},
                   {"up_gap", updown.up_gap},
                   {"down_gap", updown.down_gap},
                   {"n_up", updown.n_up},
                   {"n_down", updown.n_down}}},
                 {"yield_vol",
                  {{"correlation", dyvol.correlation}, {"n_points", dyvol.n_points}}},
                 {"first_date", to_string(in.m.dates[deciles.first])},
                 {"last_date", to_string(in.m.dates[deciles.last])}};
        write_file_atomic((fs::path(cfg.output_dir) / "report.json").string(),
                          doc.dump(2) + "\n");
    }
    echo_config(cfg, cfg.output_dir);
    std::cout << "decile report written to " << cfg.output_dir << "\n";
    return 0;
}

// ---- factors -----------------------------------------------------------------

std::vector<std::string> split_names(const std::string& csv) {
    std::vector<std::string> names;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) names.push_back(item);
    return names;
}

std::vector<std::pair<std::string, MonthlySeries>> build_factor_series(
    const std::vector<std::string>& names, const RunConfig& cfg, const Inputs& in,
    const RollingEstimators& est) {
    std::vector<std::pair<std::string, MonthlySeries>> series;
    for (const std::string& name : names) {
        FactorDefinition def = factor_definition(name);
        StrategyRun run =
            build_factor(def, in.m, in.panel, in.rates, est, cfg.strategy,
                         in.metrics ? &*in.metrics : nullptr);
        series.emplace_back(name, monthly_sums(run.pnl, in.m));
    }
    return series;
}

int cmd_factors(const CommonArgs& args, const std::string& factor_list,
                const std::string& holdings_norm) {
    RunConfig cfg = resolve(args);
    Inputs in = materialize(cfg, cfg.output_dir);
    fs::create_directories(cfg.output_dir);
    RollingEstimators est(in.panel, in.m, cfg.strategy.windows);

    std::vector<std::string> names;
    if (!factor_list.empty()) {
        names = split_names(factor_list);
    } else {
        names = {"MKT", "LOWVOL", "LOWBETA"};
        for (const char* metric_factor : {"UMD", "SMB", "HML", "EP", "DP"}) {
            FactorDefinition def = factor_definition(metric_factor);
            if (in.metrics && in.metrics->has(def.metric)) names.push_back(def.name);
        }
    }
    auto series = build_factor_series(names, cfg, in, est);

    write_monthly_csv(series, (fs::path(cfg.output_dir) / "factor_pnl.csv").string());
    {
        CorrelationTable table = pnl_correlation(series);
        std::ostringstream out;
        out << "factor";
        for (const auto& n : table.names) out << ',' << n;
        out << '\n';
        for (int a = 0; a < int(table.names.size()); ++a) {
            out << table.names[size_t(a)];
            for (int b = 0; b < int(table.names.size()); ++b)
                out << ',' << fmt_full(table.corr(a, b));
            out << '\n';
        }
        write_file_atomic((fs::path(cfg.output_dir) / "correlations.csv").string(),
                          out.str());
        json doc{{"n_months", table.n_months}, {"factors", table.names}};
        write_file_atomic((fs::path(cfg.output_dir) / "report.json").string(),
                          doc.dump(2) + "\n");
    }

    if (!cfg.holdings.empty()) {
        HoldingsNormalization norm = holdings_norm == "fund"
                                         ? HoldingsNormalization::by_fund_total
                                         : HoldingsNormalization::by_market_cap;
        std::map<std::string, std::function<Eigen::VectorXd(int)>> signals{
            {"sigma", [&](int t) { return est.sigma_at(t); }},
            {"beta", [&](int t) { return est.beta_at(t); }}};
        HoldingsBiasReport bias = holdings_bias(cfg.holdings, in.m, signals,
                                                in.metrics ? &*in.metrics : nullptr, norm);
        std::ostringstream out;
        out << "date,signal,correlation,smoothed\n";
        for (const auto& [signal, values] : bias.correlation)
            for (size_t k = 0; k < values.size(); ++k)
                out << to_string(in.m.dates[bias.sample_days[k]]) << ',' << signal << ','
                    << fmt_full(values[k]) << ','
                    << fmt_full(bias.smoothed.at(signal)[k]) << '\n';
        write_file_atomic((fs::path(cfg.output_dir) / "holdings_bias.csv").string(),
                          out.str());
    }
    echo_config(cfg, cfg.output_dir);
    std::cout << "factor report written to " << cfg.output_dir << "\n";
    return 0;
}

// ---- residualize ----------------------------------------------------------------

int cmd_residualize(const CommonArgs& args, const std::string& target,
                    const std::string& on, int rolling) {
    if (target.empty() || on.empty())
        throw ConfigError("residualize needs --target and --on");
    RunConfig cfg = resolve(args);
    Inputs in = materialize(cfg, cfg.output_dir);
    fs::create_directories(cfg.output_dir);
    RollingEstimators est(in.panel, in.m, cfg.strategy.windows);

    auto target_series = build_factor_series({target}, cfg, in, est);
    auto regressors = build_factor_series(split_names(on), cfg, in, est);
    ResidualReport rep = residualize(target_series[0].second, regressors, rolling);

    {
        std::ostringstream out;
        out << "month,residual\n";
        for (size_t k = 0; k < rep.residual.month_keys.size(); ++k)
            out << rep.residual.month_keys[k] << ',' << fmt_full(rep.residual.values[long(k)])
                << '\n';
        write_file_atomic((fs::path(cfg.output_dir) / "residual.csv").string(), out.str());
    }
    {
        json coef = json::object(), corr = json::object();
        for (size_t j = 0; j < rep.regressor_names.size(); ++j) {
            coef[rep.regressor_names[j]] = rep.coefficients[long(j)];
            corr[rep.regressor_names[j]] = rep.residual_regressor_corr[long(j)];
        }
        json doc{{"target", target},
                 {"intercept_monthly", rep.intercept},
                 {"coefficients", coef},
                 {"residual_sharpe", rep.residual_sharpe},
                 {"residual_regressor_correlation", corr},
                 {"rolling_months", rep.window_months},
                 {"n_months", rep.residual.month_keys.size()}};
        write_file_atomic((fs::path(cfg.output_dir) / "coefficients.json").string(),
                          doc.dump(2) + "\n");
    }
    echo_config(cfg, cfg.output_dir);
    std::cout << "residualization written to " << cfg.output_dir << "\n";
    return 0;
}

// ---- simulate ----------------------------------------------------------------

int cmd_simulate(const CommonArgs& args) {
    RunConfig cfg = resolve(args);
    if (!cfg.use_synthetic)
        throw ConfigError("simulate needs a 'synthetic' config section");
    fs::create_directories(cfg.output_dir);

    SyntheticTruth truth;
    MarketData m = generate(cfg.market, &truth);
    RiskFreeCurve rates = flat_rates(m, cfg.market.annual_rate);
    write_market_csv(m, cfg.output_dir, &rates);
    write_metrics_csv(m, truth, (fs::path(cfg.output_dir) / "metrics.csv").string());
    {
        std::ostringstream out;
        out << "instrument,sigma,dividend_yield,shares,sigma_decile\n";
        for (int i = 0; i < m.instruments(); ++i)
            out << m.ids[size_t(i)] << ',' << fmt_full(truth.sigma[i]) << ','
                << fmt_full(truth.dy[i]) << ',' << fmt_full(truth.shares[i]) << ','
                << truth.sigma_decile[size_t(i)] << '\n';
        write_file_atomic((fs::path(cfg.output_dir) / "truth.csv").string(), out.str());
    }
    echo_config(cfg, cfg.output_dir);
    std::cout << "synthetic market written to " << cfg.output_dir << "\n";
    return 0;
}

// ---- verify ----------------------------------------------------------------

int cmd_verify(std::string cli_override) {
    std::string self = cli_override;
    if (self.empty()) {
        std::error_code ec;
        fs::path exe = fs::read_symlink("/proc/self/exe", ec);
        if (ec) throw DomainError("cannot resolve own executable path; pass --cli");
        self = exe.string();
    }
    int failures = 0;
    auto results = lowvol::checks::run_all(self, [&](const checks::CheckResult& r) {
        failures += r.pass ? 0 : 1;
        std::printf("%-4s %-38s %s  (%.1fs)  %s\n", r.id.c_str(), r.name.c_str(),
                    r.pass ? "PASS" : "FAIL", r.seconds, r.detail.c_str());
        std::fflush(stdout);
    });
    std::printf("%d/%zu checks passed\n", int(results.size()) - failures, results.size());
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"low-volatility / low-beta strategy laboratory"};
    app.require_subcommand(1);

    CommonArgs backtest_args, deciles_args, factors_args, resid_args, sim_args;
    std::string factor_list, holdings_norm = "cap";
    std::string resid_target, resid_on;
    int resid_rolling = 0;
    std::string verify_cli;

    CLI::App* backtest = app.add_subcommand("backtest", "run a strategy backtest");
    add_common(backtest, backtest_args, true);

    CLI::App* deciles = app.add_subcommand("deciles", "volatility-decile portfolios");
    add_common(deciles, deciles_args, false);

    CLI::App* factors = app.add_subcommand("factors", "factor P&Ls and correlations");
    add_common(factors, factors_args, false);
    factors->add_option("--factors", factor_list, "comma-separated factor names");
    factors->add_option("--holdings-normalization", holdings_norm,
                        "holdings tilt normalization: cap | fund")
        ->check(CLI::IsMember({"cap", "fund"}));

    CLI::App* resid = app.add_subcommand("residualize",
                                         "regress one factor's monthly P&L on others");
    add_common(resid, resid_args, false);
    resid->add_option("--target", resid_target, "factor to explain")->required();
    resid->add_option("--on", resid_on, "comma-separated regressor factors")->required();
    resid->add_option("--rolling", resid_rolling,
                      "trailing window in months (0 = full sample)");

    CLI::App* simulate = app.add_subcommand("simulate", "write a synthetic market");
    add_common(simulate, sim_args, false);

    CLI::App* verify = app.add_subcommand("verify", "run the built-in checks");
    verify->add_option("--cli", verify_cli, "path to the executable to re-run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2; // bad usage is a config-class error
    }

    try {
        if (backtest->parsed()) return cmd_backtest(backtest_args);
        if (deciles->parsed()) return cmd_deciles(deciles_args);
        if (factors->parsed()) return cmd_factors(factors_args, factor_list, holdings_norm);
        if (resid->parsed())
            return cmd_residualize(resid_args, resid_target, resid_on, resid_rolling);
        if (simulate->parsed()) return cmd_simulate(sim_args);
        if (verify->parsed()) return cmd_verify(verify_cli);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
