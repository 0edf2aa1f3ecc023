"""Agenda dynamics of the simulated user (pull, push-as-replace, early stop)."""
from __future__ import annotations

import dataclasses as dc
import json
import random
from importlib import resources
from pathlib import Path
from typing import Iterable

from .corpus import CIR6_MAIN, TransitionModel, cir6_main, coarse_map, draw
from .domain import (
    AgentActionKind, Agenda, CompatibilityTable, DialogueAction, Goal, TaxonomyError,
    UserActionKind, compatible,
)

COMPLETE = UserActionKind.COMPLETE


@dc.dataclass
class SimulationState:
    agenda: Agenda
    goal: Goal = dc.field(default_factory=Goal)
    last_user_action: DialogueAction | None = None
    last_agent_action: AgentActionKind | None = None
    turn: int = 0


class Cir6StateDiagram:
    """Connectivity between the six main user actions."""

    def __init__(self, edges: Iterable[tuple[str, str]]):
        edges = frozenset((a, b) for a, b in edges)
        for a, b in edges:
            for node in (a, b):
                if node not in CIR6_MAIN:
                    raise TaxonomyError(f"unknown CIR6 action {node!r}")
        self.edges = edges
        self._check()

    def _check(self):
        if any(a == "Complete" for a, _ in self.edges):
            raise ValueError("Complete must be terminal")
        reach = {"Complete"}
        changed = True
        while changed:
            changed = False
            for a, b in self.edges:
                if b in reach and a not in reach:
                    reach.add(a)
                    changed = True
        stuck = set(CIR6_MAIN) - reach
        if stuck:
            raise ValueError(f"no path to Complete from {sorted(stuck)}")

    def successors(self, node: str) -> tuple[str, ...]:
        return tuple(b for b in CIR6_MAIN if (node, b) in self.edges)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Cir6StateDiagram":
        if path is None:
            text = resources.files("crsim.data").joinpath("cir6_diagram.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        return cls(tuple(e) for e in json.loads(text)["edges"])


def _main(action) -> str:
    if isinstance(action, DialogueAction):
        action = action.kind
    if isinstance(action, UserActionKind):
        return cir6_main(action)
    if action in CIR6_MAIN:
        return action
    raise TaxonomyError(f"not a CIR6 action: {action!r}")


def cir6_transition_allowed(diagram: Cir6StateDiagram, a_t, a_next) -> bool:
    return (_main(a_t), _main(a_next)) in diagram.edges


def goal_accomplished(a_t, b_t, table: CompatibilityTable | None = None) -> bool:
    """delta: did the agent answer the user's act appropriately."""
    if b_t is None:
        return False
    a = a_t.kind if isinstance(a_t, DialogueAction) else a_t
    b = b_t.kind if isinstance(b_t, DialogueAction) else b_t
    return compatible(a, b, table)


def _fine(model: TransitionModel, klass: str, rng: random.Random, allow_complete: bool) -> UserActionKind:
    exclude = () if allow_complete else (COMPLETE.label,)
    return UserActionKind(draw(model.fine[klass], rng, exclude=exclude))


def masked_cir6_row(model: TransitionModel, diagram: Cir6StateDiagram, current: str,
                    allow_complete: bool = True) -> dict[str, float]:
    allowed = [m for m in diagram.successors(current) if allow_complete or m != "Complete"]
    row = {m: model.transitions[current][m] for m in allowed}
    total = sum(row.values())
    if total <= 0:
        return {m: 1.0 / len(allowed) for m in allowed}
    return {m: p / total for m, p in row.items()}


def next_user_action_cir6(state: SimulationState, model: TransitionModel, diagram: Cir6StateDiagram,
                          rng: random.Random, allow_complete: bool = True) -> UserActionKind | None:
    """Successor of the last user act under the diagram-masked bigram model.

    Returns None from Complete, which has no successor.
    """
    current = _main(state.last_user_action)
    if current == "Complete":
        return None
    row = masked_cir6_row(model, diagram, current, allow_complete)
    if not row:
        return None
    main = draw(row, rng)
    return _fine(model, main, rng, allow_complete)


def next_user_action_qrfa(state: SimulationState, model: TransitionModel, rng: random.Random,
                          allow_complete: bool = True) -> UserActionKind:
    """Coarse class via the agent act (observed, or drawn from P(b|class)), then a fine act."""
    b = state.last_agent_action
    if b is None:
        klass = coarse_map(state.last_user_action).value
        b = AgentActionKind(draw(model.agent_given_user[klass], rng))
    klass = draw(model.user_given_agent[b.label], rng)
    return _fine(model, klass, rng, allow_complete)


def walk_next(model: TransitionModel, current: UserActionKind, rng: random.Random,
              diagram: Cir6StateDiagram | None = None) -> UserActionKind:
    """One step of agenda generation; never yields Complete."""
    state = SimulationState(Agenda(), last_user_action=DialogueAction(current))
    if model.kind == "CIR6":
        nxt = next_user_action_cir6(state, model, diagram or default_diagram(), rng, allow_complete=False)
        if nxt is None:
            # only reachable with a diagram whose sole exit is Complete
            return UserActionKind(draw(model.start, rng, exclude={COMPLETE.label}))
        return nxt
    return next_user_action_qrfa(state, model, rng, allow_complete=False)


def _replacement(model: TransitionModel, b: AgentActionKind | None, rng: random.Random) -> UserActionKind:
    if b is None:
        # unrecognised agent reply: pool the replacement rows
        rows = model.replacement.values()
        pooled: dict[str, float] = {}
        for row in rows:
            for k, p in row.items():
                pooled[k] = pooled.get(k, 0.0) + p
        dist = pooled
    else:
        dist = model.replacement[b.label]
    return UserActionKind(draw(dist, rng, exclude={COMPLETE.label}))


def update_agenda(state: SimulationState, model: TransitionModel, delta: bool,
                  rng: random.Random) -> Agenda:
    """Next agenda after one exchange. Pull on success, replace the top otherwise.

    A replacement keeps the goal of the action it replaces. Closing the dialogue
    has no substitute, so a Complete that was not acknowledged stays on top.
    """
    agenda = state.agenda.copy()
    if not agenda:
        return agenda
    if agenda.top.kind is COMPLETE and not delta:
        return agenda
    if delta:
        agenda.pull()
        if (model.kind == "QRFA" and agenda and agenda.top.kind is not COMPLETE
                and state.last_agent_action is not None):
            nxt = next_user_action_qrfa(state, model, rng, allow_complete=False)
            agenda.replace_top(DialogueAction(nxt))
        return agenda
    agenda.replace_top(DialogueAction(_replacement(model, state.last_agent_action, rng)))
    return agenda


def apply_pkg_early_stop(state: SimulationState, preferences, item: str) -> tuple[Agenda, str | None]:
    """Collapse the agenda to [Complete] when the user would accept ``item``.

    Returns the (possibly new) agenda and the outcome: "early_stop", "consumed" or None.
    """
    if preferences.consumed(item):
        return state.agenda, "consumed"
    closing = len(state.agenda) == 1 and state.agenda.top.kind is COMPLETE
    if preferences.would_accept(item) and state.agenda and not closing:
        return Agenda([DialogueAction(COMPLETE)]), "early_stop"
    return state.agenda, None


_default_diagram: Cir6StateDiagram | None = None


def default_diagram() -> Cir6StateDiagram:
    global _default_diagram
    if _default_diagram is None:
        _default_diagram = Cir6StateDiagram.load()
    return _default_diagram
