import pytest

from btpolicy import bt
from btpolicy.bt import NodeKind, NodeStatus, TickContext, iter_preorder, tick
from btpolicy.domain import make_state, parse_domain
from btpolicy.errors import (InvalidTarget, PlanBudgetExceeded, Unsolvable)
from btpolicy.grammar import parse_literal
from btpolicy.planner import (GoalSpec, PlanConfig, expand_condition,
                              init_tree, plan)

from oracles import bfs_plan


def lit(text):
    return parse_literal(text)


def goal(*texts):
    return GoalSpec(tuple(lit(t) for t in texts))


def run_tree(tree, domain, state, max_ticks=500):
    """Execute by plain effect application; returns (final status, state, fired)."""
    current = state.visible_only()
    fired = []

    def step(leaf):
        nonlocal current
        current = domain.apply_effects(current, leaf.action)
        fired.append(leaf.action)
        return NodeStatus.RUNNING

    ctx = TickContext(lambda l: domain.holds(current, l), step)
    seen = {current.true}
    for _ in range(max_ticks):
        status, _trace = tick(tree, ctx)
        if status in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            return status, current, fired
        if current.true in seen:
            return NodeStatus.RUNNING, current, fired
        seen.add(current.true)
    return NodeStatus.RUNNING, current, fired


class TestInitTree:
    def test_goal_children_in_order(self, cube_domain):
        tree = init_tree(goal("on(blue_cube, green_cube)", "grasped(red_cube)"))
        assert tree.root.kind is NodeKind.SEQUENCE
        assert [str(c.payload) for c in tree.root.children] == \
            ["on(blue_cube, green_cube)", "grasped(red_cube)"]

    def test_empty_goal_rejected(self):
        with pytest.raises(ValueError):
            GoalSpec(())

    def test_single_goal(self):
        tree = init_tree(goal("on(blue_cube, green_cube)"))
        assert len(tree.root.children) == 1


class TestExpandCondition:
    def test_expand_replaces_leaf_with_fallback(self, cube_domain):
        state = make_state(cube_domain, [], objects=["blue_cube", "green_cube", "table"])
        tree = init_tree(goal("on(blue_cube, green_cube)"))
        cond_id = tree.root.children[0].id
        expand_condition(tree, cond_id, cube_domain, state)
        fallback = tree.root.children[0]
        assert fallback.kind is NodeKind.FALLBACK
        assert fallback.children[0].id == cond_id
        branch = fallback.children[1]
        assert [n.kind for n in branch.children] == \
            [NodeKind.CONDITION, NodeKind.ACTION]
        assert str(branch.children[1].payload) == \
            "place(dst=green_cube, obj=blue_cube)"

    def test_expanding_true_condition_rejected(self, cube_domain):
        state = make_state(cube_domain, ["on(blue_cube, green_cube)"])
        tree = init_tree(goal("on(blue_cube, green_cube)"))
        with pytest.raises(InvalidTarget):
            expand_condition(tree, tree.root.children[0].id, cube_domain, state)

    def test_double_expansion_rejected(self, cube_domain):
        state = make_state(cube_domain, [])
        tree = init_tree(goal("on(blue_cube, green_cube)"))
        cond_id = tree.root.children[0].id
        expand_condition(tree, cond_id, cube_domain, state)
        with pytest.raises(InvalidTarget):
            expand_condition(tree, cond_id, cube_domain, state)

    def test_no_achiever(self, cube_domain):
        state = make_state(cube_domain, ["upright(red_cup)"])
        tree = init_tree(goal("~upright(red_cup)"))
        with pytest.raises(Exception) as err:
            expand_condition(tree, tree.root.children[0].id, cube_domain, state)
        assert "achieve" in str(err.value)

    def test_node_count_strictly_increases(self, cube_domain, blocked_cube_state):
        tree = init_tree(goal("on(blue_cube, green_cube)"))
        before = tree.node_count()
        expand_condition(tree, tree.root.children[0].id, cube_domain,
                         blocked_cube_state)
        assert tree.node_count() > before


class TestPlan:
    def test_unobstructed_cube_goal_sound(self, cube_domain):
        state = make_state(cube_domain,
                           ["on(blue_cube, table)", "on(green_cube, table)"],
                           objects=["blue_cube", "green_cube", "table"])
        tree = plan(goal("on(blue_cube, green_cube)"), cube_domain, state)
        status, final, _ = run_tree(tree, cube_domain, state)
        assert status is NodeStatus.SUCCESS
        assert cube_domain.holds(final, lit("on(blue_cube, green_cube)"))

    def test_already_satisfied_goal_no_expansion(self, cube_domain):
        state = make_state(cube_domain, ["on(blue_cube, green_cube)"])
        goals = goal("on(blue_cube, green_cube)")
        tree = plan(goals, cube_domain, state)
        assert bt.tree_equal(tree, init_tree(goals), ignore_ids=False)

    def test_plan_deterministic(self, cube_domain, blocked_cube_state):
        goals = goal("on(blue_cube, green_cube)")
        first = plan(goals, cube_domain, blocked_cube_state)
        second = plan(goals, cube_domain, blocked_cube_state)
        assert bt.serialize(first) == bt.serialize(second)

    def test_three_block_tower_matches_bfs(self, blocks_domain):
        state = make_state(blocks_domain,
                           ["on(block_a, table)", "on(block_b, table)",
                            "on(block_c, table)"])
        goals = goal("on(block_a, block_b)", "on(block_b, block_c)")
        oracle = bfs_plan(blocks_domain, state, list(goals.conjuncts))
        assert oracle is not None
        oracle_state = state.visible_only()
        for action in oracle:
            oracle_state = blocks_domain.apply_effects(oracle_state, action)
        tree = plan(goals, blocks_domain, state)
        status, final, fired = run_tree(tree, blocks_domain, state)
        assert status is NodeStatus.SUCCESS
        for conjunct in goals.conjuncts:
            assert blocks_domain.holds(final, conjunct)
        assert len(oracle) <= len(fired)
        assert final.true == oracle_state.true

    @pytest.mark.xfail(strict=True, raises=PlanBudgetExceeded, reason=(
        "known envelope limit: the full Sussman anomaly needs goal-subtree "
        "interleaving; serialized conjuncts with move-left conflict repair "
        "ping-pong at the root until the reorder budget runs out"))
    def test_sussman_anomaly_known_limit(self, blocks_domain):
        state = make_state(blocks_domain,
                           ["on(block_c, block_a)", "on(block_a, table)",
                            "on(block_b, table)"])
        goals = goal("on(block_a, block_b)", "on(block_b, block_c)")
        assert bfs_plan(blocks_domain, state, list(goals.conjuncts)) is not None
        plan(goals, blocks_domain, state)

    def test_single_stack_with_buried_source(self, blocks_domain):
        # clearing the source block is within the envelope
        state = make_state(blocks_domain,
                           ["on(block_c, block_a)", "on(block_a, table)",
                            "on(block_b, table)"])
        goals = goal("on(block_a, block_b)")
        tree = plan(goals, blocks_domain, state)
        status, final, _ = run_tree(tree, blocks_domain, state)
        assert status is NodeStatus.SUCCESS
        assert blocks_domain.holds(final, lit("on(block_a, block_b)"))

    def test_unsolvable_conjunction_fails_like_bfs(self, blocks_domain):
        state = make_state(blocks_domain,
                           ["on(block_a, table)", "on(block_b, table)",
                            "on(block_c, table)"])
        goals = goal("on(block_a, block_b)", "on(block_b, block_a)")
        assert bfs_plan(blocks_domain, state, list(goals.conjuncts)) is None
        with pytest.raises((PlanBudgetExceeded, Unsolvable)):
            plan(goals, blocks_domain, state)

    def test_budget_exceeded_carries_partial_tree(self, blocks_domain):
        state = make_state(blocks_domain,
                           ["on(block_c, block_a)", "on(block_a, table)",
                            "on(block_b, table)"])
        goals = goal("on(block_a, block_b)", "on(block_b, block_c)")
        with pytest.raises(PlanBudgetExceeded) as err:
            plan(goals, blocks_domain, state, PlanConfig(max_expansions=1))
        assert err.value.partial_tree is not None

    def test_unsolvable_literal_propagates(self, cube_domain):
        state = make_state(cube_domain, ["upright(red_cup)"])
        with pytest.raises(Unsolvable):
            plan(goal("~upright(red_cup)"), cube_domain, state)


class TestConflictReordering:
    def test_before_after_ordering_conflict(self):
        # two goals where the naive order undoes the first; the planner must
        # reorder the offending subtree leftward
        domain = parse_domain({
            "schema": "domain/v1", "name": "doors",
            "predicates": [{"name": "open_door", "arity": 1},
                           {"name": "inside", "arity": 1}],
            "objects": [{"name": "door", "category": "door"},
                        {"name": "robot", "category": "agent"}],
            "skills": [
                {"name": "enter",
                 "params": [{"name": "who", "kind": "object", "category": "agent"}],
                 "preconditions": ["open_door(door)"],
                 "effects": ["inside($who)"]},
                {"name": "shove_door",
                 "params": [],
                 "preconditions": [],
                 "effects": ["open_door(door)", "~inside(robot)"]},
            ],
        })
        state = make_state(domain, [])
        goals = goal("inside(robot)", "open_door(door)")
        tree = plan(goals, domain, state)
        status, final, _ = run_tree(tree, domain, state)
        assert status is NodeStatus.SUCCESS
        assert domain.holds(final, lit("inside(robot)"))
        assert domain.holds(final, lit("open_door(door)"))

    def test_reorder_budget_bounds_planning(self):
        domain = parse_domain({
            "schema": "domain/v1", "name": "seesaw",
            "predicates": [{"name": "up", "arity": 1}],
            "objects": [{"name": "left", "category": "side"},
                        {"name": "right", "category": "side"}],
            "skills": [
                {"name": "raise_left", "params": [],
                 "effects": ["up(left)", "~up(right)"]},
                {"name": "raise_right", "params": [],
                 "effects": ["up(right)", "~up(left)"]},
            ],
        })
        state = make_state(domain, [])
        goals = goal("up(left)", "up(right)")
        with pytest.raises(PlanBudgetExceeded):
            plan(goals, domain, state, PlanConfig(max_conflict_reorders=4))


class TestReactivity:
    def test_single_deletion_recovery_exhaustive(self, cube_domain, blocked_cube_state):
        goals = goal("on(blue_cube, green_cube)")
        tree = plan(goals, cube_domain, blocked_cube_state)
        status, final, _ = run_tree(tree, cube_domain, blocked_cube_state)
        assert status is NodeStatus.SUCCESS
        heads = {str(n.payload) for n, _ in iter_preorder(tree.root)
                 if n.kind is NodeKind.CONDITION}
        for dropped in sorted(final.true, key=str):
            weakened = final.with_changes(remove={dropped})
            status2, after, _ = run_tree(tree, cube_domain, weakened)
            restorable = str(dropped) in heads
            assert status2 is NodeStatus.SUCCESS, \
                f"deleting {dropped} (restorable={restorable}) broke the policy"
            for conjunct in goals.conjuncts:
                assert cube_domain.holds(after, conjunct)


class TestBlockedExecutionTickTrace:
    def test_blocked_grasp_fails_tick_at_the_grasp_leaf(
            self, cube_domain, blocked_cube_state):
        # ticking the planned tree in a world where the blue cube is
        # blocked: the grasp leaf fails and is the trace's failing action
        from btpolicy.bt import failing_action, tick, TickContext, NodeStatus
        goals = goal("on(blue_cube, green_cube)")
        tree = plan(goals, cube_domain, blocked_cube_state)
        state = blocked_cube_state

        def step(leaf):
            if leaf.action.skill == "grasp" and cube_domain.holds(
                    state, lit(f"on(any_object, {leaf.action.get('obj')})")):
                return NodeStatus.FAILURE
            return NodeStatus.RUNNING

        ctx = TickContext(lambda l: cube_domain.holds(state, l), step)
        status, trace = tick(tree, ctx)
        assert status is NodeStatus.FAILURE
        failing = failing_action(trace)
        node = tree.find(failing)
        assert str(node.action) == "grasp(obj=blue_cube)"


def test_plan_config_budgets_must_be_positive():
    with pytest.raises(ValueError):
        PlanConfig(max_expansions=0)
    with pytest.raises(ValueError):
        PlanConfig(max_sim_ticks=-5)
