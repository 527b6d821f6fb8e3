#include "lowvol/config.hpp"

#include "lowvol/errors.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace lowvol {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where.empty() ? what : where + ": " + what);
}

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
    if (!obj.is_object()) fail(where, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) {
            std::ostringstream msg;
            msg << "unknown key '" << it.key() << "' (allowed:";
            for (const auto& k : allowed) msg << ' ' << k;
            msg << ')';
            fail(where, msg.str());
        }
}

double as_number(const json& obj, const std::string& key, const std::string& where,
                 double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) fail(where + "." + key, "expected a number");
    return v.get<double>();
}

int as_int(const json& obj, const std::string& key, const std::string& where, int fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(where + "." + key, "expected an integer");
    return v.get<int>();
}

std::string as_string(const json& obj, const std::string& key, const std::string& where,
                      const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) fail(where + "." + key, "expected a string");
    return v.get<std::string>();
}

void parse_data(const json& obj, RunConfig& cfg) {
    require_keys(obj, "data",
                 {"prices", "dividends", "membership", "sectors", "rates", "metrics",
                  "holdings"});
    if (!obj.contains("prices") || !obj.contains("membership"))
        fail("data", "'prices' and 'membership' are required");
    cfg.prices = as_string(obj, "prices", "data", "");
    cfg.dividends = as_string(obj, "dividends", "data", "");
    cfg.membership = as_string(obj, "membership", "data", "");
    cfg.sectors = as_string(obj, "sectors", "data", "");
    cfg.rates = as_string(obj, "rates", "data", "");
    cfg.metrics = as_string(obj, "metrics", "data", "");
    cfg.holdings = as_string(obj, "holdings", "data", "");
}

void parse_synthetic(const json& obj, RunConfig& cfg) {
    require_keys(obj, "synthetic",
                 {"instruments", "days", "seed", "rho0", "sigma_mode", "sigma_shape",
                  "sigma_mean", "sigma_high", "sigma_low", "dy_link", "dy_mean", "dy_spread",
                  "decile_drifts", "mean_reversion", "down_beta_scale", "student_t_df",
                  "annual_rate", "sectors", "start_date", "pool"});
    MarketSpec& s = cfg.market;
    s.n_instruments = as_int(obj, "instruments", "synthetic", s.n_instruments);
    s.n_days = as_int(obj, "days", "synthetic", s.n_days);
    if (obj.contains("seed")) {
        const json& v = obj.at("seed");
        if (!v.is_number_unsigned() && !v.is_number_integer())
            fail("synthetic.seed", "expected an integer");
        s.seed = v.get<std::uint64_t>();
    }
    s.rho0 = as_number(obj, "rho0", "synthetic", s.rho0);
    s.sigma_mode = as_string(obj, "sigma_mode", "synthetic", s.sigma_mode);
    if (s.sigma_mode != "inverse_gamma" && s.sigma_mode != "two_point")
        fail("synthetic.sigma_mode", "expected 'inverse_gamma' or 'two_point'");
    s.sigma_shape = as_number(obj, "sigma_shape", "synthetic", s.sigma_shape);
    s.sigma_mean = as_number(obj, "sigma_mean", "synthetic", s.sigma_mean);
    s.sigma_high = as_number(obj, "sigma_high", "synthetic", s.sigma_high);
    s.sigma_low = as_number(obj, "sigma_low", "synthetic", s.sigma_low);
    s.dy_link = as_number(obj, "dy_link", "synthetic", s.dy_link);
    s.dy_mean = as_number(obj, "dy_mean", "synthetic", s.dy_mean);
    s.dy_spread = as_number(obj, "dy_spread", "synthetic", s.dy_spread);
    if (obj.contains("decile_drifts")) {
        const json& v = obj.at("decile_drifts");
        if (!v.is_array()) fail("synthetic.decile_drifts", "expected an array of numbers");
        s.decile_drifts.clear();
        for (const auto& e : v) {
            if (!e.is_number()) fail("synthetic.decile_drifts", "expected an array of numbers");
            s.decile_drifts.push_back(e.get<double>());
        }
    }
    s.mean_reversion = as_number(obj, "mean_reversion", "synthetic", s.mean_reversion);
    s.down_beta_scale = as_number(obj, "down_beta_scale", "synthetic", s.down_beta_scale);
    s.student_t_df = as_int(obj, "student_t_df", "synthetic", s.student_t_df);
    s.annual_rate = as_number(obj, "annual_rate", "synthetic", s.annual_rate);
    s.sector_count = as_int(obj, "sectors", "synthetic", s.sector_count);
    if (obj.contains("start_date"))
        s.start_date = parse_date(obj.at("start_date").get<std::string>(),
                                  "synthetic.start_date");
    s.pool_name = as_string(obj, "pool", "synthetic", s.pool_name);
}

void parse_strategy(const json& obj, RunConfig& cfg) {
    require_keys(obj, "strategy",
                 {"kind", "target_risk", "correlation", "dividend_tax", "windows"});
    cfg.strategy_kind = as_string(obj, "kind", "strategy", cfg.strategy_kind);
    if (cfg.strategy_kind != "lowvol" && cfg.strategy_kind != "lowbeta" &&
        cfg.strategy_kind != "sector_lowvol")
        fail("strategy.kind", "expected 'lowvol', 'lowbeta' or 'sector_lowvol'");
    cfg.strategy.target_risk = as_number(obj, "target_risk", "strategy",
                                         cfg.strategy.target_risk);
    if (cfg.strategy.target_risk <= 0) fail("strategy.target_risk", "must be positive");
    std::string corr = as_string(obj, "correlation", "strategy", "spike");
    if (corr == "spike")
        cfg.strategy.corr_mode = CorrelationModel::Mode::spike;
    else if (corr == "dense")
        cfg.strategy.corr_mode = CorrelationModel::Mode::dense;
    else
        fail("strategy.correlation", "expected 'spike' or 'dense'");
    cfg.strategy.dividend_tax = as_number(obj, "dividend_tax", "strategy",
                                          cfg.strategy.dividend_tax);
    if (cfg.strategy.dividend_tax < 0 || cfg.strategy.dividend_tax > 1)
        fail("strategy.dividend_tax", "must lie in [0, 1]");
    if (obj.contains("windows")) {
        const json& w = obj.at("windows");
        require_keys(w, "strategy.windows",
                     {"volatility", "beta", "beta_block", "lag", "correlation", "refresh",
                      "min_coverage"});
        EstimatorWindows& e = cfg.strategy.windows;
        e.vol_window = as_int(w, "volatility", "strategy.windows", e.vol_window);
        e.beta_window = as_int(w, "beta", "strategy.windows", e.beta_window);
        e.beta_block = as_int(w, "beta_block", "strategy.windows", e.beta_block);
        e.lag = as_int(w, "lag", "strategy.windows", e.lag);
        e.corr_window = as_int(w, "correlation", "strategy.windows", e.corr_window);
        e.corr_refresh = as_int(w, "refresh", "strategy.windows", e.corr_refresh);
        e.min_coverage = as_number(w, "min_coverage", "strategy.windows", e.min_coverage);
        if (e.vol_window < 2 || e.beta_window < 2 || e.beta_block < 1 || e.lag < 0 ||
            e.corr_window < 2 || e.corr_refresh < 1)
            fail("strategy.windows", "window sizes out of range");
        if (e.min_coverage <= 0 || e.min_coverage > 1)
            fail("strategy.windows.min_coverage", "must be in (0, 1]");
    }
}

} // namespace

void apply_override(nlohmann::json& doc, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key.path=value, got '" + assignment + "'");
    std::string path = assignment.substr(0, eq);
    std::string raw = assignment.substr(eq + 1);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw; // unquoted strings are taken literally
    }

    json* node = &doc;
    std::istringstream keys(path);
    std::string key;
    std::vector<std::string> parts;
    while (std::getline(keys, key, '.')) {
        if (key.empty()) throw ConfigError("--set: empty key segment in '" + path + "'");
        parts.push_back(key);
    }
    for (size_t k = 0; k + 1 < parts.size(); ++k) {
        if (!node->is_object()) throw ConfigError("--set: '" + parts[k] + "' is not an object");
        node = &(*node)[parts[k]];
        if (node->is_null()) *node = json::object();
    }
    if (!node->is_object()) throw ConfigError("--set: cannot descend into '" + path + "'");
    (*node)[parts.back()] = value;
}

RunConfig config_from_json(const nlohmann::json& doc) {
    require_keys(doc, "", {"data", "synthetic", "strategy", "output"});

    RunConfig cfg;
    cfg.effective = doc;

    bool has_data = doc.contains("data");
    bool has_synth = doc.contains("synthetic");
    if (has_data == has_synth)
        fail("", "exactly one of 'data' and 'synthetic' must be present");

    if (has_data) parse_data(doc.at("data"), cfg);
    if (has_synth) {
        cfg.use_synthetic = true;
        parse_synthetic(doc.at("synthetic"), cfg);
    }
    if (doc.contains("strategy")) parse_strategy(doc.at("strategy"), cfg);
    if (doc.contains("output")) {
        if (!doc.at("output").is_string()) fail("output", "expected a string");
        cfg.output_dir = doc.at("output").get<std::string>();
    }

    if (cfg.strategy_kind == "lowvol")
        cfg.strategy.kind = StrategyKind::lowvol;
    else if (cfg.strategy_kind == "lowbeta")
        cfg.strategy.kind = StrategyKind::lowbeta;
    else
        cfg.strategy.kind = StrategyKind::sector_lowvol;
    return cfg;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    for (const auto& assignment : overrides) apply_override(doc, assignment);
    RunConfig cfg = config_from_json(doc);
    cfg.effective = doc;
    return cfg;
}

} // namespace lowvol
