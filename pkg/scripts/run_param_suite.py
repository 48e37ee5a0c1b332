#!/usr/bin/env python3
"""Run the six parameter scenarios with the scripted fixtures and print the
values bound into each final policy."""

from btpolicy.backends import ScriptedBackend
from btpolicy.bt import NodeKind, iter_preorder
from btpolicy.resolver import resolve_until_success
from btpolicy.sim import bundled_data_path, load_scenarios


def main() -> None:
    backend = ScriptedBackend.from_file(bundled_data_path("fixtures", "scripted.yaml"))
    scenarios = [s for s in load_scenarios(bundled_data_path("scenarios"))
                 if s.id.startswith("param_")]
    for scenario in scenarios:
        result = resolve_until_success(scenario, backend)
        bound = []
        for node, _ in iter_preorder(result.tree.root):
            if node.kind is NodeKind.ACTION:
                for slot, value in node.action.binding:
                    if slot in scenario.open_params:
                        bound.append(f"{node.action.skill}.{slot}={value}")
        print(f"{scenario.id:28s} {result.outcome.value:10s} {', '.join(bound)}")


if __name__ == "__main__":
    main()
