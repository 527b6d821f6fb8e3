// Acceptance gate: runs the ten self-verification checks and prints one
// pass/fail line each. Exit status is the number of failures, so a green run
// exits 0. All tolerances, seeds and time budgets live in src/checks.cpp.
#include "lowvol/checks.hpp"

#include <cstdio>

int main() {
    int failures = 0;
    const auto results =
        lowvol::checks::run_all(LOWVOL_CLI_PATH, [&](const lowvol::checks::CheckResult& r) {
            if (!r.pass) ++failures;
            std::printf("[%s] %-4s %-36s (%6.1fs)  %s\n", r.pass ? "PASS" : "FAIL",
                        r.id.c_str(), r.name.c_str(), r.seconds, r.detail.c_str());
            std::fflush(stdout);
        });
    std::printf("%d/%d criteria satisfied\n", int(results.size()) - failures,
                int(results.size()));
    return failures;
}
