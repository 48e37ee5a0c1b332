#!/usr/bin/env python3
"""Regenerate the committed golden trees for the cube stacking scenario.

The "before" tree is the plain planner output; the "after" tree is the
policy once the blocked grasp has been resolved and re-expanded. Run from
the repository root after intentional planner/resolver changes, then review
the diff.
"""

from btpolicy import bt
from btpolicy.resolver import resolve_until_success
from btpolicy.planner import plan
from btpolicy.sim import bundled_data_path, load_scenario

OUT = bundled_data_path("goldens")


def main() -> None:
    scenario = load_scenario(bundled_data_path("scenarios", "cube_stack_golden.yaml"))
    result = resolve_until_success(scenario, scenario.oracle_backend())
    assert result.outcome.value == "success", result.outcome

    before = plan(result.goals, scenario.domain, scenario.initial)
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "cube_stack_before.json").write_text(bt.serialize(before))
    (OUT / "cube_stack_after.json").write_text(bt.serialize(result.tree))
    (OUT / "cube_stack_before.dot").write_text(bt.to_dot(before))
    (OUT / "cube_stack_after.dot").write_text(bt.to_dot(result.tree))
    print(f"wrote goldens to {OUT}")


if __name__ == "__main__":
    main()
