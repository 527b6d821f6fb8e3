// Self-verification suite: ten numbered checks covering the closed forms,
// the generator oracles, the accounting identities and determinism. The
// acceptance binary and the `verify` CLI subcommand both run these.
#pragma once

#include <functional>
#include <string>
#include <vector>

namespace lowvol::checks {

struct CheckResult {
    std::string id;     // "A1".."A10"
    std::string name;   // short label
    bool pass = false;
    double seconds = 0.0;
    std::string detail; // key measured numbers, shown inline
};

CheckResult a1_spike_inverse();
CheckResult a2_net_gross_ratio();
CheckResult a3_beta_oracle();
CheckResult a4_strategy_pair_correlation();
CheckResult a5_accounting_identities();
CheckResult a6_compounding();
CheckResult a7_planted_yield_mechanism();
CheckResult a8_residualization();
CheckResult a9_lag_robustness();
// Needs the CLI executable to re-run commands; pass its absolute path.
CheckResult a10_determinism(const std::string& cli_path);

// Runs every check in order; `on_result` (when given) fires as each one
// finishes, so callers can stream progress.
std::vector<CheckResult> run_all(
    const std::string& cli_path,
    const std::function<void(const CheckResult&)>& on_result = nullptr);

} // namespace lowvol::checks
