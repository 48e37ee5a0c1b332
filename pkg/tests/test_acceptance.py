"""Acceptance criteria for the whole pipeline.

Each test enforces one criterion at its stated tolerance and prints one
PASS line (visible with ``pytest -s tests/test_acceptance.py``). Derived
expectations come from the independent oracles in oracles.py, never from
the code paths under test.
"""

import itertools
import random
import time

import pytest
import yaml

from btpolicy import bt
from btpolicy.backends import RequestMeta, ScriptedBackend
from btpolicy.bt import (BehaviorTree, NodeKind, NodeStatus, TickContext,
                         TreeNode, iter_preorder, tick, tree_equal)
from btpolicy.domain import load_domain, make_state
from btpolicy.errors import ParseError, PlanBudgetExceeded, Unsolvable
from btpolicy.grammar import parse_literal, parse_literal_conjunction
from btpolicy.llm import (PromptSpec, Role, build_prompt, condition_catalog,
                          parse_goal_response, parse_precondition_response,
                          scene_from_state)
from btpolicy.planner import GoalSpec, _head_literal, plan
from btpolicy.resolver import Outcome, resolve_until_success
from btpolicy.sim import bundled_data_path, execute, load_scenarios
from btpolicy.terms import GroundAction, Literal, Quantity

from oracles import bfs_plan, oracle_status

STATUSES = (NodeStatus.SUCCESS, NodeStatus.FAILURE, NodeStatus.RUNNING)


def _report(n, label, detail=""):
    print(f"ACCEPTANCE {n:02d} {label}: PASS {detail}")


def test_c01_tick_oracle_equivalence():
    """Exhaustive agreement with the recursive evaluator over every tree of
    at most three levels with <=3 children per node: 0 mismatches, <5 s."""
    start = time.perf_counter()
    leaf_actions = {s: GroundAction(s.value) for s in STATUSES}
    status_of_skill = {s.value: s for s in STATUSES}
    ctx = TickContext(lambda lit: True,
                      lambda leaf: status_of_skill[leaf.action.skill])

    level1_nodes = [TreeNode(0, NodeKind.ACTION, [], leaf_actions[s])
                    for s in STATUSES]
    level1_tuples = [("leaf", s) for s in STATUSES]
    nodes, tuples = list(level1_nodes), list(level1_tuples)
    for kind, kname in ((NodeKind.SEQUENCE, "seq"), (NodeKind.FALLBACK, "fb")):
        for width in (1, 2, 3):
            for combo in itertools.product(range(3), repeat=width):
                nodes.append(TreeNode(0, kind, [level1_nodes[i] for i in combo]))
                tuples.append((kname, tuple(level1_tuples[i] for i in combo)))
    # every subtree's oracle value, computed once; roots are then evaluated
    # by the same oracle over the equivalent fixed-status children
    expected = [oracle_status(t) for t in tuples]
    as_leaf = [("leaf", status) for status in expected]

    checked = mismatches = 0
    holder = BehaviorTree(level1_nodes[0], next_id=1)
    for node, want in zip(nodes, expected):
        holder.root = node
        got, _ = tick(holder, ctx, record_trace=False)
        checked += 1
        mismatches += got is not want

    count = len(nodes)
    for kind, kname in ((NodeKind.SEQUENCE, "seq"), (NodeKind.FALLBACK, "fb")):
        for width in (1, 2, 3):
            for combo in itertools.product(range(count), repeat=width):
                holder.root = TreeNode(0, kind, [nodes[i] for i in combo])
                want = oracle_status((kname, tuple(as_leaf[i] for i in combo)))
                got, _ = tick(holder, ctx, record_trace=False)
                checked += 1
                mismatches += got is not want
    elapsed = time.perf_counter() - start
    assert mismatches == 0
    assert checked == 1_076_247
    assert elapsed < 5.0, f"took {elapsed:.2f}s"
    _report(1, "tick oracle equivalence", f"({checked} trees, {elapsed:.2f}s)")


def test_c02_golden_reproduction(golden_scenario):
    start = time.perf_counter()
    result = resolve_until_success(golden_scenario,
                                   golden_scenario.oracle_backend())
    assert result.outcome is Outcome.SUCCESS
    before = plan(result.goals, golden_scenario.domain, golden_scenario.initial)
    golden_before = bt.parse(
        (bundled_data_path("goldens") / "cube_stack_before.json").read_text())
    golden_after = bt.parse(
        (bundled_data_path("goldens") / "cube_stack_after.json").read_text())
    assert tree_equal(before, golden_before), "pre-failure tree diverged"
    assert tree_equal(result.tree, golden_after), "post-resolution tree diverged"
    assert len(result.records) == 1  # one blocked-grasp failure
    # the two repair subtrees: blocker removal and freeing the hand
    actions = {str(n.payload) for n, _ in iter_preorder(result.tree.root)
               if n.kind is NodeKind.ACTION}
    assert "grasp(obj=red_cube)" in actions
    assert "place(dst=table, obj=red_cube)" in actions
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    _report(2, "golden tree reproduction", f"({elapsed:.2f}s)")


@pytest.fixture(scope="module")
def precond_results():
    scenarios = [s for s in load_scenarios(bundled_data_path("scenarios"))
                 if s.id.startswith("precond_")]
    assert len(scenarios) == 10
    start = time.perf_counter()
    runs = {}
    for scenario in scenarios:
        outcomes = []
        for _ in range(10):
            result = resolve_until_success(scenario, scenario.oracle_backend())
            outcomes.append(result)
        runs[scenario.id] = outcomes
    return runs, scenarios, time.perf_counter() - start


def test_c03_precond_suite_perfect_score(precond_results):
    runs, scenarios, elapsed = precond_results
    for scenario in scenarios:
        outcomes = [r.outcome for r in runs[scenario.id]]
        assert outcomes == [Outcome.SUCCESS] * 10, scenario.id
    assert elapsed < 30.0, f"took {elapsed:.2f}s"
    _report(3, "ten-scenario suite 10/10 repeats", f"({elapsed:.2f}s)")


def test_c04_permanence(precond_results):
    runs, scenarios, _ = precond_results
    for scenario in scenarios:
        final_tree = runs[scenario.id][0].tree
        replay = execute(final_tree, scenario)  # fresh world, no resolver
        assert replay.outcome == "success", scenario.id
        assert replay.events == [], scenario.id
    _report(4, "permanence on fresh replay", "(10/10)")


def test_c05_insertion_first(precond_results):
    runs, scenarios, _ = precond_results
    violations = 0
    checked = 0
    for scenario in scenarios:
        for result in runs[scenario.id]:
            tree = result.tree
            order = {n.id: i for i, (n, _) in enumerate(iter_preorder(tree.root))}
            for record in result.records:
                if record.kind != "precondition" or record.rejected:
                    continue
                action_leaf = tree.find(record.event.action_id)
                parent, _ = tree.parent_of(action_leaf.id)
                assert parent.kind is NodeKind.SEQUENCE
                heads = [_head_literal(child) for child in parent.children]
                inserted = [str(lit) for lit in record.inserted]
                checked += len(inserted)
                # inserted literals occupy the leftmost precondition slots,
                # in suggestion order, before everything that was there
                if [str(h) for h in heads[:len(inserted)]] != inserted:
                    violations += 1
    assert checked > 0
    assert violations == 0
    _report(5, "inserted literals are leftmost preconditions",
            f"({checked} insertions)")


def _completeness_cases():
    data = bundled_data_path("domains")
    cube = load_domain(data / "cube_tabletop.yaml")
    lab = load_domain(data / "lab_bench.yaml")
    blocks = load_domain(data / "blocks_strict.yaml")
    cases = [
        (cube, ["on(blue_cube, table)", "on(green_cube, table)"],
         "on(blue_cube, green_cube)"),
        (cube, ["on(red_cube, blue_cube)", "on(blue_cube, table)",
                "on(green_cube, table)"],
         "on(blue_cube, green_cube)"),
        (cube, ["on(green_cube, table)", "on(red_cup, table)"],
         "in(green_cube, red_cup)"),
        (cube, ["on(green_cube, table)"], "upright(red_cup)"),
        (cube, [], "grasped(blue_cube) & grasped(red_cube)"),   # unsolvable
        (cube, ["upright(red_cup)"], "~upright(red_cup)"),      # unsolvable
        (lab, ["on(test_tube, table)"], "in(test_tube, centrifuge)"),
        (lab, ["in(test_tube, centrifuge)"], "on(test_tube, table)"),
        (lab, [], "is_open(centrifuge) & in(test_tube, centrifuge)"),
        (blocks, ["on(block_a, table)", "on(block_b, table)",
                  "on(block_c, table)"],
         "on(block_a, block_b) & on(block_b, block_c)"),
        (blocks, ["on(block_c, block_a)", "on(block_a, table)",
                  "on(block_b, table)"],
         "on(block_a, block_b)"),
        (blocks, ["on(block_a, block_b)", "on(block_b, block_c)",
                  "on(block_c, table)"],
         "on(block_a, table) & on(block_b, table)"),
        (blocks, [], "on(block_a, block_b) & on(block_b, block_a)"),  # unsolvable
    ]
    return cases


def test_c06_planner_completeness_at_desk_scale():
    start = time.perf_counter()
    disagreements = 0
    for domain, visible, goal_text in _completeness_cases():
        assert len(domain.objects) <= 6
        state = make_state(domain, visible)
        goals = GoalSpec(tuple(parse_literal_conjunction(goal_text)))
        oracle = bfs_plan(domain, state, list(goals.conjuncts))
        try:
            tree = plan(goals, domain, state)
            planner_solved = True
        except (Unsolvable, PlanBudgetExceeded):
            planner_solved = False
        if planner_solved != (oracle is not None):
            disagreements += 1
            continue
        if planner_solved:
            final = _run_plain(tree, domain, state)
            assert final is not None, goal_text
            for conjunct in goals.conjuncts:
                assert domain.holds(final, conjunct), (goal_text, conjunct)
    elapsed = time.perf_counter() - start
    assert disagreements == 0
    assert elapsed < 60.0, f"took {elapsed:.2f}s"
    _report(6, "planner agrees with BFS oracle",
            f"({len(_completeness_cases())} cases, {elapsed:.2f}s)")


def _run_plain(tree, domain, state, max_ticks=500):
    current = state.visible_only()

    def step(leaf):
        nonlocal current
        current = domain.apply_effects(current, leaf.action)
        return NodeStatus.RUNNING

    ctx = TickContext(lambda l: domain.holds(current, l), step)
    seen = {current.true}
    for _ in range(max_ticks):
        status, _trace = tick(tree, ctx, record_trace=False)
        if status is NodeStatus.SUCCESS:
            return current
        if status is NodeStatus.FAILURE:
            return None
        if current.true in seen:
            return None
        seen.add(current.true)
    return None


def test_c07_reactivity_exhaustive_deletions(golden_scenario):
    result = resolve_until_success(golden_scenario,
                                   golden_scenario.oracle_backend())
    assert result.outcome is Outcome.SUCCESS
    final_state = result.world
    heads = {str(n.payload) for n, _ in iter_preorder(result.tree.root)
             if n.kind is NodeKind.CONDITION}
    restorable = 0
    for dropped in sorted(final_state.true, key=str):
        weakened = final_state.with_changes(remove={dropped})
        replay = execute(result.tree, golden_scenario, world=weakened)
        if str(dropped) in heads:
            restorable += 1
        assert replay.outcome == "success", f"deletion of {dropped} not recovered"
        for conjunct in result.goals.conjuncts:
            assert golden_scenario.domain.holds(replay.final_state, conjunct)
    assert restorable >= 1
    _report(7, "reactivity under single deletions",
            f"({len(final_state.true)} deletions, {restorable} restorable)")


def test_c08_parameter_propagation():
    backend = ScriptedBackend.from_file(bundled_data_path("fixtures", "scripted.yaml"))
    scenarios = {s.id: s for s in load_scenarios(bundled_data_path("scenarios"))
                 if s.id.startswith("param_")}

    def leaves(tree, *skills):
        return [n.action for n, _ in iter_preorder(tree.root)
                if n.kind is NodeKind.ACTION and n.action.skill in skills]

    sand = resolve_until_success(scenarios["param_sand_tool"], backend)
    sand_actions = leaves(sand.tree, "scoop", "dump")
    assert sand_actions and all(a.get("tool") == "shovel" for a in sand_actions)

    plate = resolve_until_success(scenarios["param_plate_tool"], backend)
    plate_actions = leaves(plate.tree, "scrub", "rinse")
    assert plate_actions and all(a.get("tool") == "sponge" for a in plate_actions)

    expectations = [
        ("param_egg_hammer_force", "grasp", "force",
         {"egg": Quantity(5.3, "N"), "hammer": Quantity(37.2, "N")}),
        ("param_pillow_speed", "put", "speed",
         {"pillow": Quantity(0.6, "m/s")}),
        ("param_first_aid_speed", "put", "speed",
         {"first_aid_kit": Quantity(1.5, "m/s")}),
        ("param_baby_speed", "put_in", "speed",
         {"baby": Quantity(0.1, "m/s")}),
    ]
    for sid, skill, slot, per_object in expectations:
        result = resolve_until_success(scenarios[sid], backend)
        assert result.outcome is Outcome.SUCCESS, sid
        got = {a.get("obj"): a.get(slot)
               for a in leaves(result.tree, skill)
               if a.get("obj") in per_object}
        assert got == per_object, (sid, got)
    _report(8, "parameter values propagate", "(6 scenarios)")


def test_c09_parser_robustness(cube_domain):
    rng = random.Random(421371)
    alphabet = ("abcdefgh_()~&$@,. \n\tANSWER:REASONING:0123456789"
                "é→\U0001f916\"'")
    crashes = 0
    for _ in range(10_000):
        raw = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 80)))
        for parser in (parse_goal_response, parse_precondition_response):
            try:
                parser(raw, cube_domain)
            except ParseError:
                pass
            except Exception:
                crashes += 1
    assert crashes == 0

    predicates = list(cube_domain.predicates.values())
    names = list(cube_domain.objects) + ["any_object"]
    for _ in range(1_000):
        predicate = rng.choice(predicates)
        literal = Literal(predicate.name,
                          tuple(rng.choice(names) for _ in range(predicate.arity)),
                          rng.random() < 0.5)
        assert parse_literal(str(literal)) == literal
    _report(9, "parser robustness", "(10k fuzz, 1k round trips)")


def test_c10_single_call_per_instruction():
    bench = bundled_data_path("benchmarks", "cafe_goals.yaml")
    data = yaml.safe_load(bench.read_text())
    domain = load_domain((bench.parent / data["domain"]).resolve())
    state = make_state(domain, data["scene"]["visible"])
    catalog = condition_catalog(domain)
    scene = scene_from_state(domain, state)

    calls = {"n": 0}

    class CountingOracle:
        def __init__(self, answer):
            self.answer = answer

        def complete(self, prompt, meta):
            calls["n"] += 1
            return f"ANSWER: {self.answer}"

    correct = 0
    for entry in data["instructions"]:
        spec = PromptSpec(Role.GOAL_INTERPRETATION, entry["instruction"],
                          state.objects, catalog, domain.goal_examples, scene)
        backend = CountingOracle(entry["goal"])
        raw = backend.complete(build_prompt(spec),
                               RequestMeta(Role.GOAL_INTERPRETATION, entry["id"]))
        goals, _ = parse_goal_response(raw, domain, objects=state.object_names)
        truth = {str(l) for l in parse_literal_conjunction(entry["goal"])}
        correct += {str(c) for c in goals.conjuncts} == truth
    assert calls["n"] == len(data["instructions"]) == 30
    assert correct == 30
    _report(10, "one backend call per instruction", "(30 instructions)")


def test_c11_prompt_containment_substitutes_for_live_accuracy(cafe_domain):
    # Live accuracy percentages need a live model and are reported, never
    # asserted; these containment properties are the deterministic stand-in.
    state = make_state(cafe_domain, ["On(Plate, Table1)"],
                       objects=["Plate", "Cupboard", "Bar", "Table1"])
    goal_text = build_prompt(PromptSpec(
        Role.GOAL_INTERPRETATION, "Put the plate in cupboard", state.objects,
        condition_catalog(cafe_domain), cafe_domain.goal_examples,
        scene_from_state(cafe_domain, state)))
    failure_text = build_prompt(PromptSpec(
        Role.FAILURE_RESOLUTION, "Put the plate in cupboard", state.objects,
        condition_catalog(cafe_domain), cafe_domain.precondition_examples,
        scene_from_state(cafe_domain, state),
        error_message="Torque limit exceeded",
        failing_action=GroundAction.from_mapping(
            "PutIn", {"obj": "Plate", "cont": "Cupboard"})))
    for text in (goal_text, failure_text):
        for predicate in cafe_domain.predicates.values():
            assert predicate.description in text
        for name in state.object_names:
            assert name in text
    assert "The appliance is on. Negating turns the appliance off." in goal_text
    assert "Torque limit exceeded" in failure_text
    assert "most similar" in goal_text  # object-restriction clause
    assert failure_text.index("ANSWER") < failure_text.index("REASONING")
    _report(11, "prompt containment in lieu of live accuracy")
