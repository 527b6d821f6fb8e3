#include "lowvol/config.hpp"
#include "lowvol/errors.hpp"
#include "lowvol/synthetic_market.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>
#include <unistd.h>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path dir;
    Scratch() {
        dir = fs::temp_directory_path() /
              ("lowvol_cli_" + std::to_string(::getpid()) + "_" +
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

int run_cli(const std::string& args) {
    std::string cmd = std::string("\"") + LOWVOL_CLI_PATH + "\" " + args +
                      " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small but long enough that performance statistics are defined
// (> 252 P&L days after the 250-day correlation warmup).
json small_config(const std::string& out_dir) {
    return json{
        {"synthetic",
         {{"instruments", 40},
          {"days", 560},
          {"seed", 11},
          {"rho0", 0.3},
          {"dy_mean", 0.03},
          {"dy_spread", 0.005},
          {"dy_link", -0.2},
          {"annual_rate", 0.02}}},
        {"strategy",
         {{"kind", "lowvol"},
          {"windows",
           {{"correlation", 250}, {"volatility", 60}, {"beta", 60}, {"lag", 10}}}}},
        {"output", out_dir}};
}

} // namespace

TEST_CASE("config overrides follow the dotted-path syntax") {
    using lowvol::apply_override;
    json doc = small_config("out");
    apply_override(doc, "synthetic.seed=99");
    CHECK(doc["synthetic"]["seed"] == 99);

    apply_override(doc, "strategy.windows.lag=25");
    CHECK(doc["strategy"]["windows"]["lag"] == 25);

    apply_override(doc, "strategy.kind=lowbeta"); // unquoted string value
    CHECK(doc["strategy"]["kind"] == "lowbeta");

    apply_override(doc, "synthetic.decile_drifts=[0.1,0.2,0.3,0,0,0,0,0,0,0]");
    CHECK(doc["synthetic"]["decile_drifts"].size() == 10);

    CHECK_THROWS_AS(apply_override(doc, "no_equals_sign"), lowvol::ConfigError);
    CHECK_THROWS_AS(apply_override(doc, "=5"), lowvol::ConfigError);
}

TEST_CASE("config validation is strict about keys and values") {
    Scratch s;

    json good = small_config((s.dir / "out").string());
    lowvol::RunConfig cfg =
        lowvol::load_config(s.file("good.json", good.dump()), {});
    CHECK(cfg.use_synthetic);
    CHECK(cfg.market.n_instruments == 40);
    CHECK(cfg.strategy.windows.corr_window == 250);

    json typo = good;
    typo["synthetic"]["instrments"] = 40;
    CHECK_THROWS_WITH_AS(lowvol::load_config(s.file("typo.json", typo.dump()), {}),
                         doctest::Contains("instrments"), lowvol::ConfigError);

    json both = good;
    both["data"] = {{"prices", "p.csv"}, {"membership", "m.csv"}};
    CHECK_THROWS_WITH_AS(lowvol::load_config(s.file("both.json", both.dump()), {}),
                         doctest::Contains("exactly one"), lowvol::ConfigError);

    json badkind = good;
    badkind["strategy"]["kind"] = "momentum";
    CHECK_THROWS_AS(lowvol::load_config(s.file("kind.json", badkind.dump()), {}),
                    lowvol::ConfigError);

    json badtax = good;
    badtax["strategy"]["dividend_tax"] = 1.5;
    CHECK_THROWS_AS(lowvol::load_config(s.file("tax.json", badtax.dump()), {}),
                    lowvol::ConfigError);

    // Overrides are validated like everything else.
    CHECK_THROWS_WITH_AS(
        lowvol::load_config(s.file("ok.json", good.dump()),
                            {"strategy.windows.volatility=0"}),
        doctest::Contains("out of range"), lowvol::ConfigError);
    // Generator-domain values pass through; the generator rejects them later.
    lowvol::RunConfig wild =
        lowvol::load_config(s.file("ok2.json", good.dump()), {"synthetic.rho0=7"});
    CHECK(wild.market.rho0 == 7.0);
    CHECK_THROWS_AS(lowvol::generate(wild.market), lowvol::DomainError);
}

TEST_CASE("backtest subcommand writes the full artifact set and echoes overrides") {
    Scratch s;
    fs::path out = s.dir / "run1";
    std::string cfgfile = s.file("cfg.json", small_config(out.string()).dump());

    int rc = run_cli("backtest --config " + cfgfile + " --set synthetic.seed=77");
    REQUIRE(rc == 0);

    for (const char* name :
         {"pnl.csv", "stats.json", "positions.csv", "diagnostics.csv", "config.json",
          "metrics.csv"})
        CHECK(fs::exists(out / name));

    json echoed = json::parse(slurp(out / "config.json"));
    CHECK(echoed["synthetic"]["seed"] == 77);

    json stats = json::parse(slurp(out / "stats.json"));
    CHECK(stats["financed"]["n_days"].get<int>() > 252);
    CHECK(std::isfinite(stats["financed"]["sharpe"].get<double>()));
    CHECK(std::isfinite(stats["dividend_attribution"]["financed"].get<double>()));

    // pnl.csv: header plus one line per P&L day.
    std::string pnl = slurp(out / "pnl.csv");
    long lines = std::count(pnl.begin(), pnl.end(), '\n');
    CHECK(lines == stats["financed"]["n_days"].get<int>() + 1);
}

TEST_CASE("flags --seed/--out/--strategy are overrides, so the echo reflects them") {
    Scratch s;
    fs::path out_cfg = s.dir / "ignored";
    fs::path out_flag = s.dir / "actual";
    std::string cfgfile = s.file("cfg.json", small_config(out_cfg.string()).dump());

    int rc = run_cli("backtest --config " + cfgfile + " --seed 123 --strategy lowbeta --out " +
                     out_flag.string());
    REQUIRE(rc == 0);
    CHECK_FALSE(fs::exists(out_cfg));
    REQUIRE(fs::exists(out_flag / "config.json"));

    json echoed = json::parse(slurp(out_flag / "config.json"));
    CHECK(echoed["synthetic"]["seed"] == 123);
    CHECK(echoed["strategy"]["kind"] == "lowbeta");
    CHECK(echoed["output"] == out_flag.string());
}

TEST_CASE("simulate writes a deterministic market") {
    Scratch s;
    json cfg = small_config((s.dir / "m1").string());
    cfg["synthetic"]["days"] = 120; // simulation-only run can be short
    std::string cfgfile = s.file("sim.json", cfg.dump());

    REQUIRE(run_cli("simulate --config " + cfgfile) == 0);
    REQUIRE(run_cli("simulate --config " + cfgfile + " --set output=" +
                    (s.dir / "m2").string()) == 0);

    for (const char* name : {"prices.csv", "dividends.csv", "membership.csv",
                             "sectors.csv", "rates.csv", "metrics.csv", "truth.csv"}) {
        CHECK(slurp(s.dir / "m1" / name) == slurp(s.dir / "m2" / name));
        CHECK(fs::file_size(s.dir / "m1" / name) > 0);
    }
}

TEST_CASE("exit codes separate empty usage, bad config and domain failures") {
    Scratch s;

    CHECK(run_cli("") == 2);                     // no subcommand
    CHECK(run_cli("backtest") == 2);             // --config is required
    CHECK(run_cli("nonsense --config x") == 2);  // unknown subcommand
    CHECK(run_cli("backtest --config /nonexistent.json") == 2);

    json bad = small_config((s.dir / "o").string());
    bad["strategy"]["kind"] = 12;
    CHECK(run_cli("backtest --config " + s.file("bad.json", bad.dump())) == 2);

    // Structurally valid config that fails in the generator: domain error.
    json dom = small_config((s.dir / "o2").string());
    dom["synthetic"]["instruments"] = 4;
    CHECK(run_cli("backtest --config " + s.file("dom.json", dom.dump())) == 1);

    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("backtest --help") == 0);
}

TEST_CASE("residualize subcommand regresses one factor on others") {
    Scratch s;
    fs::path out = s.dir / "resid";
    json cfg = small_config(out.string());
    cfg["synthetic"]["days"] = 860; // enough complete months after warmup
    std::string cfgfile = s.file("cfg.json", cfg.dump());

    CHECK(run_cli("residualize --config " + cfgfile) == 2); // --target/--on required

    int rc = run_cli("residualize --config " + cfgfile +
                     " --target LOWVOL --on MKT,DP");
    REQUIRE(rc == 0);

    json coef = json::parse(slurp(out / "coefficients.json"));
    CHECK(coef["target"] == "LOWVOL");
    CHECK(coef["coefficients"].contains("MKT"));
    CHECK(coef["coefficients"].contains("DP"));
    CHECK(coef["n_months"].get<int>() >= 24);
    double corr = coef["residual_regressor_correlation"]["MKT"].get<double>();
    CHECK(std::abs(corr) < 1e-10);
    CHECK(fs::exists(out / "residual.csv"));
}

TEST_CASE("factors subcommand reports monthly correlations") {
    Scratch s;
    fs::path out = s.dir / "factors";
    json cfg = small_config(out.string());
    cfg["synthetic"]["days"] = 860;
    std::string cfgfile = s.file("cfg.json", cfg.dump());

    int rc = run_cli("factors --config " + cfgfile + " --factors MKT,LOWVOL,LOWBETA");
    REQUIRE(rc == 0);

    std::string table = slurp(out / "correlations.csv");
    CHECK(table.find("factor,MKT,LOWVOL,LOWBETA") == 0);
    std::string pnl = slurp(out / "factor_pnl.csv");
    CHECK(pnl.find("month,factor,value") == 0);
    CHECK(pnl.find("LOWBETA") != std::string::npos);

    json rep = json::parse(slurp(out / "report.json"));
    CHECK(rep["n_months"].get<int>() >= 24);
}
