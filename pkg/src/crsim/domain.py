"""Dialogue-act taxonomy, agenda, goal and transcript types."""
from __future__ import annotations

import dataclasses as dc
import enum
import json
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping


class TaxonomyError(ValueError):
    """Raised for an action label outside the closed taxonomy."""


class Category(str, enum.Enum):
    QUERY_FORMULATION = "Query Formulation"
    SET_RETRIEVAL = "Set Retrieval"
    MIXED_INITIATIVE = "Mixed Initiative"


class _Kind(str, enum.Enum):
    @property
    def label(self) -> str:
        return self.value

    @property
    def group(self) -> str:
        return self.value.split(".")[0]

    @property
    def name_short(self) -> str:
        return self.value.split(".")[-1]

    @classmethod
    def parse(cls, label: str):
        try:
            return cls(label.strip())
        except ValueError:
            raise TaxonomyError(f"unknown {cls.__name__} label: {label!r}") from None

    def __str__(self) -> str:
        return self.value


class UserActionKind(_Kind):
    DISCLOSE = "Reveal.Disclose"
    NON_DISCLOSE = "Reveal.Non-disclose"
    REVISE = "Reveal.Revise"
    REFINE = "Reveal.Refine"
    EXPAND = "Reveal.Expand"
    LIST = "Inquire.List"
    COMPARE = "Inquire.Compare"
    SUBSET = "Inquire.Subset"
    SIMILAR = "Inquire.Similar"
    REPEAT = "Navigate.Repeat"
    BACK = "Navigate.Back"
    MORE = "Navigate.More"
    NOTE = "Navigate.Note"
    COMPLETE = "Navigate.Complete"
    SUGGEST = "Suggest"

    @property
    def category(self) -> Category:
        if self.group == "Reveal":
            return Category.QUERY_FORMULATION
        if self.group in ("Inquire", "Navigate"):
            return Category.SET_RETRIEVAL
        return Category.MIXED_INITIATIVE


class AgentActionKind(_Kind):
    ELICIT = "Inquire.Elicit"
    CLARIFY = "Inquire.Clarify"
    SHOW = "Reveal.Show"
    LIST = "Reveal.List"
    SIMILAR = "Reveal.Similar"
    SUBSET = "Reveal.Subset"
    REPEAT = "Traverse.Repeat"
    BACK = "Traverse.Back"
    MORE = "Traverse.More"
    RECORD = "Traverse.Record"
    END = "Traverse.End"
    SUGGEST = "Suggest"

    @property
    def category(self) -> Category:
        if self.group == "Inquire":
            return Category.QUERY_FORMULATION
        if self.group in ("Reveal", "Traverse"):
            return Category.SET_RETRIEVAL
        return Category.MIXED_INITIATIVE


USER_KINDS: tuple[UserActionKind, ...] = tuple(UserActionKind)
AGENT_KINDS: tuple[AgentActionKind, ...] = tuple(AgentActionKind)

# Agent acts that put a concrete item in front of the user.
RECOMMENDING_KINDS = frozenset({
    AgentActionKind.SHOW, AgentActionKind.LIST, AgentActionKind.SIMILAR,
    AgentActionKind.SUBSET, AgentActionKind.MORE, AgentActionKind.SUGGEST,
})


class Speaker(str, enum.Enum):
    USER = "USER"
    AGENT = "AGENT"


def parse_kind(label: str, speaker: Speaker | str):
    speaker = Speaker(speaker)
    if speaker is Speaker.USER:
        return UserActionKind.parse(label)
    return AgentActionKind.parse(label)


SLOT_NAMES = ("ITEM", "ATTRIBUTE", "SENTIMENT")


@dc.dataclass(frozen=True)
class DialogueAction:
    kind: UserActionKind | AgentActionKind
    slots: tuple[tuple[str, str], ...] = ()
    raw_utterance: str | None = None

    def __post_init__(self):
        for name, _ in self.slots:
            if name not in SLOT_NAMES:
                raise ValueError(f"undeclared slot {name!r}")

    @property
    def speaker(self) -> Speaker:
        return Speaker.USER if isinstance(self.kind, UserActionKind) else Speaker.AGENT

    def slot(self, name: str) -> str | None:
        for key, value in self.slots:
            if key == name:
                return value
        return None

    def to_dict(self) -> dict:
        return {"kind": self.kind.label, "slots": [list(s) for s in self.slots]}

    @classmethod
    def from_dict(cls, data: Mapping, speaker: Speaker | str) -> "DialogueAction":
        return cls(parse_kind(data["kind"], speaker),
                   tuple((k, v) for k, v in data.get("slots", ())))


class Agenda:
    """Stack of pending user actions; index 0 is the bottom (executed last)."""

    def __init__(self, actions: Iterable[DialogueAction] = ()):
        self._stack = list(actions)

    def __len__(self) -> int:
        return len(self._stack)

    def __bool__(self) -> bool:
        return bool(self._stack)

    def __eq__(self, other) -> bool:
        return isinstance(other, Agenda) and self._stack == other._stack

    def __repr__(self) -> str:
        return f"Agenda({[a.kind.label for a in self._stack]})"

    @property
    def top(self) -> DialogueAction:
        if not self._stack:
            raise IndexError("empty agenda")
        return self._stack[-1]

    def push(self, action: DialogueAction) -> None:
        self._stack.append(action)

    def pull(self) -> DialogueAction:
        if not self._stack:
            raise IndexError("pull from empty agenda")
        return self._stack.pop()

    def replace_top(self, action: DialogueAction) -> None:
        if not self._stack:
            raise IndexError("empty agenda")
        self._stack[-1] = action

    def clear(self) -> None:
        self._stack.clear()

    def copy(self) -> "Agenda":
        return Agenda(self._stack)

    def bottom_to_top(self) -> tuple[DialogueAction, ...]:
        return tuple(self._stack)


@dc.dataclass(frozen=True)
class Goal:
    """Information-seeking goal: constraints C and requests R."""
    constraints: tuple[tuple[str, str], ...] = ()
    requests: frozenset[str] = frozenset({"RECOMMENDATION"})

    def satisfy(self, request: str) -> "Goal":
        return dc.replace(self, requests=self.requests - {request})


class CompatibilityTable:
    """Which agent acts count as an appropriate reply to each user act."""

    def __init__(self, mapping: Mapping[UserActionKind, Iterable[AgentActionKind]]):
        self._map = {u: frozenset(mapping.get(u, ())) for u in USER_KINDS}

    def __call__(self, user: UserActionKind, agent: AgentActionKind) -> bool:
        return agent in self._map[user]

    def accepted(self, user: UserActionKind) -> frozenset[AgentActionKind]:
        return self._map[user]

    def to_dict(self) -> dict:
        return {u.label: sorted(a.label for a in self._map[u]) for u in USER_KINDS}

    @classmethod
    def from_dict(cls, data: Mapping[str, Iterable[str]]) -> "CompatibilityTable":
        return cls({UserActionKind.parse(u): [AgentActionKind.parse(a) for a in agents]
                    for u, agents in data.items()})

    @classmethod
    def load(cls, path: str | Path | None = None) -> "CompatibilityTable":
        if path is None:
            text = resources.files("crsim.data").joinpath("compatibility.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        return cls.from_dict(json.loads(text))


_default_table: CompatibilityTable | None = None


def default_table() -> CompatibilityTable:
    global _default_table
    if _default_table is None:
        _default_table = CompatibilityTable.load()
    return _default_table


def compatible(user_action: UserActionKind, agent_action: AgentActionKind,
               table: CompatibilityTable | None = None) -> bool:
    return (table or default_table())(user_action, agent_action)


class Status(str, enum.Enum):
    COMPLETED = "COMPLETED"
    TURN_CAP_REACHED = "TURN_CAP_REACHED"
    AGENT_ERROR = "AGENT_ERROR"


@dc.dataclass(frozen=True)
class Turn:
    index: int
    speaker: Speaker
    utterance: str
    actions: tuple[DialogueAction, ...] = ()
    goal_satisfied: bool | None = None
    # agent turns: agenda update that followed ("pull", "push", "early_stop", "consumed");
    # user turns: "interjection" for a Note the agenda did not schedule
    note: str | None = None

    def to_dict(self) -> dict:
        d = {"index": self.index, "speaker": self.speaker.value, "utterance": self.utterance,
             "actions": [a.to_dict() for a in self.actions]}
        if self.speaker is Speaker.AGENT:
            d["goal_satisfied"] = self.goal_satisfied
        if self.note is not None:
            d["note"] = self.note
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Turn":
        speaker = Speaker(d["speaker"])
        return cls(d["index"], speaker, d["utterance"],
                   tuple(DialogueAction.from_dict(a, speaker) for a in d.get("actions", ())),
                   d.get("goal_satisfied"), d.get("note"))


@dc.dataclass(frozen=True)
class DialogueTranscript:
    conversation_id: str
    seed: int
    status: Status
    turns: tuple[Turn, ...]
    initial_agenda: tuple[str, ...] = ()
    simulator: str = ""
    agent: str = ""

    def __post_init__(self):
        for prev, cur in zip(self.turns, self.turns[1:]):
            if cur.index <= prev.index:
                raise ValueError("turn indices must be strictly increasing")

    @property
    def user_turns(self) -> tuple[Turn, ...]:
        return tuple(t for t in self.turns if t.speaker is Speaker.USER)

    @property
    def agent_turns(self) -> tuple[Turn, ...]:
        return tuple(t for t in self.turns if t.speaker is Speaker.AGENT)

    def to_dict(self) -> dict:
        return {"conversation_id": self.conversation_id, "seed": self.seed,
                "simulator": self.simulator, "agent": self.agent,
                "status": self.status.value, "initial_agenda": list(self.initial_agenda),
                "turns": [t.to_dict() for t in self.turns]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DialogueTranscript":
        return cls(d["conversation_id"], d["seed"], Status(d["status"]),
                   tuple(Turn.from_dict(t) for t in d["turns"]),
                   tuple(d.get("initial_agenda", ())), d.get("simulator", ""), d.get("agent", ""))


def dump_transcripts(transcripts: Iterable[DialogueTranscript], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in transcripts:
            fh.write(json.dumps(t.to_dict(), ensure_ascii=False) + "\n")


def load_transcripts(path: str | Path) -> list[DialogueTranscript]:
    with open(path, encoding="utf-8") as fh:
        return [DialogueTranscript.from_dict(json.loads(line)) for line in fh if line.strip()]
