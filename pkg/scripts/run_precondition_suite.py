#!/usr/bin/env python3
"""Run the ten precondition scenarios with the oracle backend and print a
per-scenario table: rounds used, live outcome, and fresh-replay outcome."""

import time

from btpolicy.resolver import resolve_until_success
from btpolicy.sim import bundled_data_path, execute, load_scenarios


def main() -> None:
    scenarios = [s for s in load_scenarios(bundled_data_path("scenarios"))
                 if s.id.startswith("precond_")]
    print(f"{'scenario':34s} {'rounds':>6s} {'live':>10s} {'replay':>10s} {'secs':>6s}")
    for scenario in scenarios:
        start = time.perf_counter()
        result = resolve_until_success(scenario, scenario.oracle_backend())
        replay = execute(result.tree, scenario)
        print(f"{scenario.id:34s} {result.rounds:>6d} {result.outcome.value:>10s} "
              f"{replay.outcome:>10s} {time.perf_counter() - start:>6.2f}")


if __name__ == "__main__":
    main()
