// Run configuration: a strict JSON document describing either a set of input
// CSV files or a synthetic market, plus strategy parameters. Unknown keys are
// rejected so typos fail loudly instead of silently using defaults.
#pragma once

#include "lowvol/strategy.hpp"
#include "lowvol/synthetic_market.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace lowvol {

struct RunConfig {
    // Input files; empty string = not provided. Mutually exclusive with
    // `use_synthetic`.
    std::string prices;
    std::string dividends;
    std::string membership;
    std::string sectors;
    std::string rates;
    std::string metrics;
    std::string holdings;

    bool use_synthetic = false;
    MarketSpec market;

    std::string strategy_kind = "lowvol"; // lowvol | lowbeta | sector_lowvol
    StrategyConfig strategy;

    std::string output_dir = "out";

    nlohmann::json effective; // resolved document, echoed next to the outputs
};

// Applies one `--set path.to.key=value` override onto the document. The value
// is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Validates and converts a JSON document. Throws ConfigError on unknown keys,
// wrong types, or missing/contradictory sections.
RunConfig config_from_json(const nlohmann::json& doc);

// Reads the file, applies overrides in order, converts.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

} // namespace lowvol
