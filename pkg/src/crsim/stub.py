"""Stub conversational agents of known quality, reachable only through the wire protocol."""
from __future__ import annotations

import dataclasses as dc
import json
import random
import socketserver
import sys
import threading
from typing import Mapping

from .corpus import CatalogItem
from .domain import (
    AGENT_KINDS, AgentActionKind, CompatibilityTable, DialogueAction, UserActionKind, default_table,
)
from .nlg import TemplateBank, render
from .nlu import EntityCatalog, LabeledUtteranceIndex, link_entities
from .transport import CAPABILITIES, encode

POLICIES = ("PERFECT", "FLAKY", "SCRIPTED")

_ITEM_KINDS = {AgentActionKind.SHOW, AgentActionKind.LIST, AgentActionKind.SIMILAR,
               AgentActionKind.SUBSET, AgentActionKind.MORE, AgentActionKind.SUGGEST}


@dc.dataclass(frozen=True)
class StubAgentSpec:
    name: str
    policy: str = "PERFECT"
    p: float = 1.0
    capabilities: frozenset[str] = frozenset(CAPABILITIES)
    pool: tuple[str, ...] = ()
    seed: int = 0
    script: Mapping[str, str] = dc.field(default_factory=dict)   # user label -> agent label or ""
    oracle: bool = False

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown stub policy {self.policy!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.policy == "SCRIPTED":
            missing = [k.label for k in UserActionKind if k.label not in self.script]
            if missing:
                raise ValueError(f"script does not cover {missing}")
            for label in self.script.values():
                if label:
                    AgentActionKind.parse(label)

    @classmethod
    def from_dict(cls, d: Mapping) -> "StubAgentSpec":
        d = dict(d)
        if "capabilities" in d:
            d["capabilities"] = frozenset(d["capabilities"])
        if "pool" in d:
            d["pool"] = tuple(d["pool"])
        return cls(**d)


@dc.dataclass
class _Conversation:
    rng: random.Random
    attribute: str | None = None
    shown: set = dc.field(default_factory=set)


class StubAgent:
    """Answers user utterances; quality is set by the policy in its spec."""

    def __init__(self, spec: StubAgentSpec, catalog: Mapping[str, CatalogItem],
                 user_bank: TemplateBank | None = None, agent_bank: TemplateBank | None = None,
                 table: CompatibilityTable | None = None):
        self.spec = spec
        self.catalog = catalog
        self.titles = {i: c.title for i, c in catalog.items()}
        self.user_index: LabeledUtteranceIndex = (user_bank or TemplateBank.load()).to_index()
        self.agent_bank = agent_bank or TemplateBank.load(speaker="AGENT")
        self.entities = EntityCatalog.from_catalog(catalog)
        self.table = table or default_table()
        self.pool = spec.pool or tuple(sorted(catalog))
        self._conversations: dict[str, _Conversation] = {}
        self._lock = threading.Lock()

    def _conversation(self, cid: str) -> _Conversation:
        conv = self._conversations.get(cid)
        if conv is None:
            conv = _Conversation(random.Random(f"{self.spec.seed}/{cid}"))
            self._conversations[cid] = conv
        return conv

    def _respond_kind(self, user_kind: UserActionKind | None, rng: random.Random):
        spec = self.spec
        if spec.policy == "SCRIPTED":
            if user_kind is None:
                return None
            label = spec.script[user_kind.label]
            return AgentActionKind.parse(label) if label else None
        if user_kind is None:
            return AgentActionKind.CLARIFY
        good = sorted(self.table.accepted(user_kind), key=lambda k: k.label)
        bad = [k for k in AGENT_KINDS if k not in self.table.accepted(user_kind)]
        if spec.policy == "PERFECT" or rng.random() < spec.p:
            return good[int(rng.random() * len(good))]
        return bad[int(rng.random() * len(bad))]

    def _pick_item(self, conv: _Conversation) -> str:
        wanted = [i for i in self.pool if conv.attribute in self.catalog[i].attributes] \
            if conv.attribute else []
        for candidates in (wanted, self.pool):
            fresh = [i for i in candidates if i not in conv.shown]
            if fresh:
                item = fresh[int(conv.rng.random() * len(fresh))]
                conv.shown.add(item)
                return item
        return self.pool[int(conv.rng.random() * len(self.pool))]

    def handle(self, request: Mapping) -> dict:
        with self._lock:
            conv = self._conversation(request["conversation_id"])
            utterance = request["utterance"]
            user_kind = self.user_index.classify(utterance).kind if utterance else None
            for _, slot, eid in link_entities(utterance, self.user_index, self.entities):
                if slot == "ATTRIBUTE":
                    conv.attribute = eid
            if not utterance:
                kind = AgentActionKind.ELICIT      # agent-first opening
            else:
                kind = self._respond_kind(user_kind, conv.rng)
            if kind is None:
                return {"utterance": ""}
            slots = [("ATTRIBUTE", conv.attribute or "popular")]
            if kind in _ITEM_KINDS:
                slots.append(("ITEM", self._pick_item(conv)))
            text = render(DialogueAction(kind, tuple(slots)), self.agent_bank, conv.rng, self.titles)
            response = {"utterance": text}
            if self.spec.oracle:
                response["actions"] = [kind.label]
            return response

    def handle_line(self, line: str) -> str:
        try:
            request = json.loads(line)
            if not (isinstance(request, dict) and isinstance(request.get("conversation_id"), str)
                    and isinstance(request.get("turn"), int) and isinstance(request.get("utterance"), str)):
                raise ValueError("request needs conversation_id, turn and utterance")
        except ValueError as e:     # JSONDecodeError is a ValueError
            return encode({"error": f"protocol error: {e}"})
        return encode(self.handle(request))


def serve_stdio(agent: StubAgent, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(agent.handle_line(line))
        stdout.flush()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace")
            if not line.strip():
                continue
            self.wfile.write(self.server.agent.handle_line(line).encode("utf-8"))
            self.wfile.flush()


class StubServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, agent: StubAgent, host: str = "127.0.0.1", port: int = 0):
        self.agent = agent
        super().__init__((host, port), _Handler)

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"tcp:{host}:{port}"
