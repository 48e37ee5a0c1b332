"""Predicate vocabulary, skill database, and closed-world state evaluation.

A Domain declares predicates (with one-line descriptions used verbatim in
prompt catalogs), an object registry with categories, category groups, and
parameterized skills with precondition and effect literal templates. World
states are closed-world sets of true positive literals plus a hidden literal
set that models faults the planner cannot observe.

Domain files are versioned YAML (schema id ``domain/v1``); see
docs/formats.md for the layout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import grammar
from .errors import (ArityMismatch, ParseError, SchemaError, UnboundSlot,
                     UnknownObject, UnknownPredicate)
from .terms import (ANY_OBJECT, GroundAction, Literal, ObjectRef, Quantity,
                    is_param, is_placeholder, is_wildcard)

DOMAIN_SCHEMA = "domain/v1"


@dataclass(frozen=True)
class Predicate:
    name: str
    arity: int
    description: str = ""
    #: optional scene sentence with {0}, {1} argument placeholders
    scene: str | None = None


@dataclass(frozen=True)
class Slot:
    """A skill parameter: object-valued, numeric with a unit, or categorical."""

    name: str
    kind: str  # "object" | "numeric" | "categorical"
    category: str | None = None          # object slots: category or group name
    unit: str | None = None              # numeric slots
    choices: tuple[str, ...] = ()        # categorical slots
    default: str | Quantity | None = None


@dataclass(frozen=True)
class SkillTemplate:
    """A parameterized action schema with declared preconditions and effects.

    Effects use delete-then-add semantics; negated effect templates may
    contain the any_object wildcard to delete every matching ground literal.
    hidden_effects are applied only by the executor, never by planning."""

    name: str
    params: tuple[Slot, ...] = ()
    preconditions: tuple[Literal, ...] = ()
    effects: tuple[Literal, ...] = ()
    hidden_effects: tuple[Literal, ...] = ()

    def slot(self, name: str) -> Slot:
        for s in self.params:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def object_slots(self) -> tuple[Slot, ...]:
        return tuple(s for s in self.params if s.kind == "object")


@dataclass(frozen=True)
class WorldState:
    """Closed world: ``true`` holds every true positive ground literal.

    ``hidden`` is per-scenario fault state living beside the visible
    literals; planning never reads it, fault guards may."""

    objects: tuple[ObjectRef, ...] = ()
    true: frozenset[Literal] = frozenset()
    hidden: frozenset[Literal] = frozenset()

    @property
    def object_names(self) -> tuple[str, ...]:
        return tuple(o.name for o in self.objects)

    def with_changes(self, add: set[Literal] = frozenset(),
                     remove: set[Literal] = frozenset()) -> "WorldState":
        return WorldState(self.objects, (self.true - remove) | add, self.hidden)

    def with_hidden_changes(self, add: set[Literal] = frozenset(),
                            remove: set[Literal] = frozenset()) -> "WorldState":
        return WorldState(self.objects, self.true, (self.hidden - remove) | add)

    def visible_only(self) -> "WorldState":
        return WorldState(self.objects, self.true, frozenset())

    def sorted_literals(self) -> list[str]:
        return sorted(str(lit) for lit in self.true)


@dataclass
class Domain:
    name: str
    predicates: dict[str, Predicate]
    objects: dict[str, ObjectRef]
    skills: dict[str, SkillTemplate]
    #: category groups, e.g. support -> (surface, cube); enumeration of a
    #: group follows member order, which fixes grounding order
    groups: dict[str, tuple[str, ...]] = field(default_factory=dict)
    #: per-role prompt examples: (instruction/context, expected answer)
    goal_examples: tuple[tuple[str, str], ...] = ()
    precondition_examples: tuple[tuple[str, str], ...] = ()
    parameter_examples: tuple[tuple[str, str], ...] = ()

    # -- vocabulary ----------------------------------------------------------

    def predicate(self, name: str) -> Predicate:
        try:
            return self.predicates[name]
        except KeyError:
            raise UnknownPredicate(name) from None

    def object(self, name: str) -> ObjectRef:
        try:
            return self.objects[name]
        except KeyError:
            raise UnknownObject(name) from None

    def skill(self, name: str) -> SkillTemplate:
        try:
            return self.skills[name]
        except KeyError:
            raise UnknownObject(name) from None

    def categories_of(self, group_or_category: str) -> tuple[str, ...]:
        return self.groups.get(group_or_category, (group_or_category,))

    def objects_in(self, group_or_category: str,
                   registry: tuple[ObjectRef, ...]) -> list[str]:
        """Registry objects admissible for a slot, in category-then-name order."""
        names = []
        for cat in self.categories_of(group_or_category):
            names.extend(sorted(o.name for o in registry if o.category == cat))
        return names

    def check_literal(self, lit: Literal, *, objects: tuple[str, ...] | None = None,
                      allow_params: bool = False) -> None:
        """Validate predicate, arity, and argument symbols."""
        pred = self.predicate(lit.predicate)
        if len(lit.args) != pred.arity:
            raise ArityMismatch(lit.predicate, pred.arity, len(lit.args))
        known = set(objects) if objects is not None else set(self.objects)
        for arg in lit.args:
            if is_wildcard(arg):
                continue
            if is_param(arg) or is_placeholder(arg):
                if not allow_params:
                    raise UnboundSlot(arg[1:], str(lit))
                continue
            if arg not in known:
                raise UnknownObject(arg)

    # -- evaluation ------------------------------------------------------------

    def holds(self, state: WorldState, lit: Literal, *,
              include_hidden: bool = False) -> bool:
        """Closed-world truth of a ground or wildcard literal.

        A positive wildcard literal is existential; a negated one is
        universal (true iff no object satisfies the positive form)."""
        pred = self.predicate(lit.predicate)
        if len(lit.args) != pred.arity:
            raise ArityMismatch(lit.predicate, pred.arity, len(lit.args))
        for arg in lit.args:
            if is_param(arg) or is_placeholder(arg):
                raise UnboundSlot(arg[1:], str(lit))
        facts = state.true | state.hidden if include_hidden else state.true
        positive_true = self._matches_any(facts, lit.positive(), state.object_names)
        return not positive_true if lit.negated else positive_true

    def _matches_any(self, facts: frozenset[Literal], positive: Literal,
                     object_names: tuple[str, ...]) -> bool:
        if not positive.has_wildcard:
            return positive in facts
        slots = [i for i, a in enumerate(positive.args) if is_wildcard(a)]
        for combo in itertools.product(object_names, repeat=len(slots)):
            args = list(positive.args)
            for i, value in zip(slots, combo):
                args[i] = value
            if Literal(positive.predicate, tuple(args)) in facts:
                return True
        return False

    # -- effects ---------------------------------------------------------------

    def ground_effects(self, action: GroundAction,
                       effects: tuple[Literal, ...]) -> list[Literal]:
        binding = action.as_dict()
        grounded = []
        for template in effects:
            lit = template.substitute({k: v for k, v in binding.items()
                                       if isinstance(v, str)})
            for arg in lit.args:
                if is_param(arg):
                    raise UnboundSlot(arg[1:], f"effect {template} of {action.skill}")
            grounded.append(lit)
        return grounded

    def apply_effects(self, state: WorldState, action: GroundAction) -> WorldState:
        """Delete-then-add application of the action's visible effects.

        Negated effects with wildcards delete every matching ground literal.
        The hidden part of the state is never touched here."""
        skill = self.skill(action.skill)
        grounded = self.ground_effects(action, skill.effects)
        remove: set[Literal] = set()
        add: set[Literal] = set()
        for lit in grounded:
            if lit.negated:
                pos = lit.positive()
                if pos.has_wildcard:
                    remove.update(f for f in state.true
                                  if _wildcard_match(pos, f))
                else:
                    remove.add(pos)
            else:
                if lit.has_wildcard:
                    raise UnboundSlot(ANY_OBJECT, f"positive effect {lit} of {action.skill}")
                add.add(lit)
        return state.with_changes(add=add, remove=remove)

    def apply_hidden_effects(self, state: WorldState, action: GroundAction) -> WorldState:
        skill = self.skill(action.skill)
        grounded = self.ground_effects(action, skill.hidden_effects)
        remove = {lit.positive() for lit in grounded if lit.negated}
        add = {lit for lit in grounded if not lit.negated}
        return state.with_hidden_changes(add=add, remove=remove)

    def ground_preconditions(self, action: GroundAction) -> list[Literal]:
        skill = self.skill(action.skill)
        return self.ground_effects(action, skill.preconditions)

    # -- backchaining support ----------------------------------------------------

    def achievers(self, lit: Literal) -> list[tuple[SkillTemplate, dict[str, str]]]:
        """Skills with an effect template unifiable with ``lit``.

        Returns (skill, partial binding) pairs in skill declaration order,
        deduplicated, each binding covering the slots the target fixes.
        Object slots left free are grounded later by the planner."""
        results: list[tuple[SkillTemplate, dict[str, str]]] = []
        for skill in self.skills.values():
            for effect in skill.effects:
                binding = _unify_effect(effect, lit)
                if binding is None:
                    continue
                if not any(s.name == skill.name and b == binding
                           for s, b in results):
                    results.append((skill, binding))
        return results


def _unify_effect(template: Literal, target: Literal) -> dict[str, str] | None:
    """Match an effect template against a goal/precondition literal.

    The template's wildcard (a delete-all position) absorbs any target
    argument; a target wildcard leaves template slots free. Returns the
    slot binding on success, None on mismatch."""
    if template.predicate != target.predicate or template.negated != target.negated:
        return None
    if len(template.args) != len(target.args):
        return None
    binding: dict[str, str] = {}
    for t_arg, g_arg in zip(template.args, target.args):
        if is_param(t_arg):
            if is_wildcard(g_arg):
                continue  # slot stays free; grounding will enumerate
            slot = t_arg[1:]
            if binding.get(slot, g_arg) != g_arg:
                return None
            binding[slot] = g_arg
        elif is_wildcard(t_arg):
            continue  # template deletes all instances at this position
        else:
            if not is_wildcard(g_arg) and t_arg != g_arg:
                return None
    return binding


def _wildcard_match(pattern: Literal, fact: Literal) -> bool:
    if pattern.predicate != fact.predicate or len(pattern.args) != len(fact.args):
        return False
    return all(is_wildcard(p) or p == f for p, f in zip(pattern.args, fact.args))


# --- domain file loading -----------------------------------------------------

def load_domain(path: str | Path) -> Domain:
    """Load and validate a versioned domain file."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise SchemaError(f"invalid YAML: {e}", file=str(path),
                          line=mark.line + 1 if mark else None) from e
    return parse_domain(data, source=str(path))


def parse_domain(data, *, source: str = "<memory>") -> Domain:
    def fail(msg: str):
        raise SchemaError(msg, file=source)

    if not isinstance(data, dict):
        fail("domain file must be a mapping")
    if data.get("schema") != DOMAIN_SCHEMA:
        fail(f"unsupported domain schema {data.get('schema')!r}, expected {DOMAIN_SCHEMA}")
    name = data.get("name")
    if not isinstance(name, str) or not name:
        fail("domain needs a non-empty 'name'")

    predicates: dict[str, Predicate] = {}
    for entry in data.get("predicates", []):
        if not isinstance(entry, dict) or "name" not in entry or "arity" not in entry:
            fail(f"bad predicate entry {entry!r}")
        pname = entry["name"]
        if pname in predicates:
            fail(f"duplicate predicate {pname!r}")
        predicates[pname] = Predicate(pname, int(entry["arity"]),
                                      entry.get("description", ""),
                                      entry.get("scene"))

    objects: dict[str, ObjectRef] = {}
    for entry in data.get("objects", []):
        if not isinstance(entry, dict) or "name" not in entry or "category" not in entry:
            fail(f"bad object entry {entry!r}")
        oname = entry["name"]
        if oname in objects:
            fail(f"duplicate object {oname!r}")
        if oname == ANY_OBJECT:
            fail(f"object name {ANY_OBJECT!r} is reserved")
        objects[oname] = ObjectRef(oname, entry["category"])

    groups: dict[str, tuple[str, ...]] = {}
    for gname, members in (data.get("groups") or {}).items():
        if not isinstance(members, list) or not members:
            fail(f"group {gname!r} needs a non-empty member list")
        groups[gname] = tuple(members)

    dom = Domain(name, predicates, objects, {}, groups)

    def parse_literals(texts, *, where: str, allow_params: bool) -> tuple[Literal, ...]:
        lits = []
        for text in texts or []:
            try:
                lit = grammar.parse_literal(text)
            except ParseError as e:
                fail(f"bad literal {text!r} in {where}: {e}")
            try:
                dom.check_literal(lit, allow_params=allow_params)
            except Exception as e:
                fail(f"invalid literal {text!r} in {where}: {e}")
            lits.append(lit)
        return tuple(lits)

    for entry in data.get("skills", []):
        if not isinstance(entry, dict) or "name" not in entry:
            fail(f"bad skill entry {entry!r}")
        sname = entry["name"]
        if sname in dom.skills:
            fail(f"duplicate skill {sname!r}")
        slots = []
        for slot_entry in entry.get("params", []):
            kind = slot_entry.get("kind", "object")
            if kind not in ("object", "numeric", "categorical"):
                fail(f"skill {sname!r}: bad slot kind {kind!r}")
            default = slot_entry.get("default")
            if default is not None and kind == "numeric":
                parsed = grammar.parse_value(str(default))
                if not isinstance(parsed, Quantity):
                    fail(f"skill {sname!r}: numeric default {default!r} is not a quantity")
                default = parsed
            slots.append(Slot(slot_entry["name"], kind,
                              category=slot_entry.get("category"),
                              unit=slot_entry.get("unit"),
                              choices=tuple(slot_entry.get("choices", ())),
                              default=default))
        slot_names = {s.name for s in slots}
        pre = parse_literals(entry.get("preconditions"),
                             where=f"skill {sname}", allow_params=True)
        eff = parse_literals(entry.get("effects"),
                             where=f"skill {sname}", allow_params=True)
        hidden = parse_literals(entry.get("hidden_effects"),
                                where=f"skill {sname}", allow_params=True)
        for lit in pre + eff + hidden:
            for arg in lit.args:
                if is_param(arg) and arg[1:] not in slot_names:
                    fail(f"skill {sname!r}: literal {lit} references undeclared slot {arg}")
        for lit in eff + hidden:
            if not lit.negated and lit.has_wildcard:
                fail(f"skill {sname!r}: positive effect {lit} may not use {ANY_OBJECT}")
        object_slot_names = {s.name for s in slots if s.kind == "object"}
        for lit in pre + eff + hidden:
            for arg in lit.args:
                if is_param(arg) and arg[1:] not in object_slot_names:
                    fail(f"skill {sname!r}: literal {lit} references non-object slot {arg}")
        dom.skills[sname] = SkillTemplate(sname, tuple(slots), pre, eff, hidden)

    prompt = data.get("prompt") or {}

    def parse_examples(key: str) -> tuple[tuple[str, str], ...]:
        pairs = []
        for ex in prompt.get(key, []):
            if not isinstance(ex, dict) or "input" not in ex or "answer" not in ex:
                fail(f"bad prompt example in {key!r}: {ex!r}")
            pairs.append((str(ex["input"]), str(ex["answer"])))
        return tuple(pairs)

    dom.goal_examples = parse_examples("goal_examples")
    dom.precondition_examples = parse_examples("precondition_examples")
    dom.parameter_examples = parse_examples("parameter_examples")
    return dom


def make_state(domain: Domain, visible: list[str] | tuple[str, ...],
               hidden: list[str] | tuple[str, ...] = (),
               objects: list[str] | None = None) -> WorldState:
    """Build a WorldState from literal strings, defaulting to all domain objects."""
    if objects is None:
        registry = tuple(domain.objects.values())
    else:
        registry = tuple(domain.object(name) for name in objects)
    names = tuple(o.name for o in registry)

    def to_set(texts) -> frozenset[Literal]:
        lits = set()
        for text in texts:
            lit = grammar.parse_literal(text)
            if lit.negated:
                raise SchemaError(f"state literal {text!r} must be positive")
            domain.check_literal(lit, objects=names)
            lits.add(lit)
        return frozenset(lits)

    return WorldState(registry, to_set(visible), to_set(hidden))
