"""Metrics over transcript sets: conversation length, participation, style divergence,
reward and turn-level success, plus agent orderings."""
from __future__ import annotations

import dataclasses as dc
import math
from collections import Counter
from typing import Iterable, Mapping, Sequence

from .corpus import DEFAULT_ALPHA, AnnotatedDialogueCorpus, normalize
from .domain import USER_KINDS, DialogueTranscript, Status, UserActionKind
from .transport import CAPABILITIES

TIE_TOLERANCE = 1e-6
POINTS_PER_FUNCTION = 4
METRICS = ("avg_turns", "user_act_ratio", "ds_kl", "reward", "success_rate")
METRIC_TITLES = {"avg_turns": "AvgTurns", "user_act_ratio": "UserActRatio", "ds_kl": "DS-KL",
                 "reward": "Reward", "success_rate": "Success Rate"}
USER_LABELS = tuple(k.label for k in USER_KINDS)


def avg_turns(transcripts: Sequence[DialogueTranscript]) -> float:
    if not transcripts:
        raise ValueError("avg_turns needs at least one transcript")
    return sum(len(t.user_turns) for t in transcripts) / len(transcripts)


def user_act_ratio(transcripts: Iterable[DialogueTranscript]) -> float:
    """User share of all annotated actions (actions, not turns)."""
    user = agent = 0
    for t in transcripts:
        user += sum(len(turn.actions) for turn in t.user_turns)
        agent += sum(len(turn.actions) for turn in t.agent_turns)
    if user + agent == 0:
        raise ValueError("no actions recorded")
    return user / (user + agent)


@dc.dataclass(frozen=True)
class ActionDistribution:
    probs: Mapping[str, float]
    provenance: str = "SIMULATED"     # REAL | SIMULATED

    def __post_init__(self):
        if self.provenance not in ("REAL", "SIMULATED"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if any(p < 0 for p in self.probs.values()):
            raise ValueError("negative probability")
        if abs(sum(self.probs.values()) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")

    @property
    def support(self) -> frozenset[str]:
        return frozenset(self.probs)

    @classmethod
    def from_counts(cls, counts: Mapping[str, int], provenance: str = "SIMULATED",
                    alpha: float = DEFAULT_ALPHA, vocab: Sequence[str] = USER_LABELS):
        return cls(normalize(counts, vocab, alpha), provenance)

    @classmethod
    def from_transcripts(cls, transcripts: Iterable[DialogueTranscript], alpha: float = DEFAULT_ALPHA):
        counts = Counter(a.kind.label for t in transcripts for turn in t.user_turns for a in turn.actions)
        return cls.from_counts(counts, "SIMULATED", alpha)

    @classmethod
    def from_corpus(cls, corpus: AnnotatedDialogueCorpus, alpha: float = DEFAULT_ALPHA):
        counts = Counter(k.label for d in corpus for k in d.user_actions())
        return cls.from_counts(counts, "REAL", alpha)


def _probs(d) -> Mapping[str, float]:
    return d.probs if isinstance(d, ActionDistribution) else d


def kl(p, q) -> float:
    """Directed divergence in nats. Both sides need the same, strictly positive support."""
    p, q = _probs(p), _probs(q)
    if set(p) != set(q):
        raise ValueError("support mismatch")
    total = 0.0
    for x in sorted(p):
        if p[x] <= 0 or q[x] <= 0:
            raise ValueError(f"zero probability for {x!r}; smooth before comparing")
        total += p[x] * math.log(p[x] / q[x])
    return max(total, 0.0)


def ds_kl(p, q) -> float:
    return (kl(p, q) + kl(q, p)) / 2


def collapse_repeats(kinds: Sequence[UserActionKind]) -> int:
    """Turn count where each pair of back-to-back Repeat actions counts once (left to right)."""
    n, i = 0, 0
    while i < len(kinds):
        if kinds[i] is UserActionKind.REPEAT and i + 1 < len(kinds) and kinds[i + 1] is UserActionKind.REPEAT:
            i += 2
        else:
            i += 1
        n += 1
    return n


def full_points(capabilities: Iterable[str], per_function: float = POINTS_PER_FUNCTION) -> float:
    caps = set(capabilities)
    unknown = caps - set(CAPABILITIES)
    if unknown:
        raise ValueError(f"unknown capabilities {sorted(unknown)}")
    return per_function * len(caps)


def reward(transcript: DialogueTranscript, capabilities: Iterable[str] = CAPABILITIES,
           per_function: float = POINTS_PER_FUNCTION, cost: float = 1.0) -> float:
    """max(0, Full - cost * T); a dialogue cut short by an agent failure earns nothing."""
    if transcript.status is Status.AGENT_ERROR:
        return 0.0
    kinds = [turn.actions[0].kind if turn.actions else None for turn in transcript.user_turns]
    return max(0.0, full_points(capabilities, per_function) - cost * collapse_repeats(kinds))


def success_rate(transcripts: Iterable[DialogueTranscript]) -> float:
    """Fraction of judged agent turns that answered the preceding user action appropriately."""
    good = total = 0
    for t in transcripts:
        for turn in t.agent_turns:
            if turn.goal_satisfied is None:
                continue
            total += 1
            good += bool(turn.goal_satisfied)
    if total == 0:
        raise ValueError("no agent turns to judge")
    return good / total


def rank_agents(reports: Mapping[str, Mapping[str, float]], metric: str,
                tolerance: float = TIE_TOLERANCE) -> list[tuple[str, ...]]:
    """Agents in descending metric order, grouped into ties.

    ``reports`` maps agent name to its metric values. Each tuple in the result is
    one rank; agents inside a tie are listed alphabetically.
    """
    if len(reports) < 2:
        raise ValueError("ranking needs at least two agents")
    missing = [a for a, m in reports.items() if metric not in m]
    if missing:
        raise ValueError(f"metric {metric!r} missing for {sorted(missing)}")
    ordered = sorted(reports, key=lambda a: (-reports[a][metric], a))
    groups: list[list[str]] = []
    for agent in ordered:
        if groups and abs(reports[groups[-1][0]][metric] - reports[agent][metric]) <= tolerance:
            groups[-1].append(agent)
        else:
            groups.append([agent])
    return [tuple(sorted(g)) for g in groups]


def format_ordering(groups: Sequence[Sequence[str]]) -> str:
    return " > ".join(" = ".join(g) for g in groups)


@dc.dataclass
class MetricsReport:
    """Per (agent, simulator) metrics and the agent ordering per metric under each simulator."""
    rows: list[dict]
    orderings: dict[str, dict[str, list[tuple[str, ...]]]]

    def value(self, agent: str, simulator: str, metric: str) -> float:
        for r in self.rows:
            if r["agent"] == agent and r["simulator"] == simulator:
                return r[metric]
        raise KeyError((agent, simulator))

    @property
    def agents(self) -> list[str]:
        return list(dict.fromkeys(r["agent"] for r in self.rows))

    @property
    def simulators(self) -> list[str]:
        return list(dict.fromkeys(r["simulator"] for r in self.rows))

    def to_dict(self) -> dict:
        return {"rows": self.rows,
                "orderings": {s: {m: [list(g) for g in groups] for m, groups in per.items()}
                              for s, per in self.orderings.items()}}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricsReport":
        return cls([dict(r) for r in d["rows"]],
                   {s: {m: [tuple(g) for g in groups] for m, groups in per.items()}
                    for s, per in d["orderings"].items()})


def metrics_row(transcripts: Sequence[DialogueTranscript], reference: ActionDistribution | None,
                capabilities: Iterable[str] = CAPABILITIES) -> dict:
    caps = sorted(capabilities)
    row = {"n": len(transcripts),
           "errors": sum(t.status is Status.AGENT_ERROR for t in transcripts),
           "turn_cap": sum(t.status is Status.TURN_CAP_REACHED for t in transcripts),
           "avg_turns": avg_turns(transcripts)}
    try:
        row["user_act_ratio"] = user_act_ratio(transcripts)
    except ValueError:
        row["user_act_ratio"] = None
    row["ds_kl"] = (ds_kl(ActionDistribution.from_transcripts(transcripts), reference)
                    if reference is not None else None)
    row["reward"] = sum(reward(t, caps) for t in transcripts) / len(transcripts)
    try:
        row["success_rate"] = success_rate(transcripts)
    except ValueError:
        row["success_rate"] = None
    return row


def evaluate(groups: Mapping[tuple[str, str], Sequence[DialogueTranscript]],
             capabilities: Mapping[str, Iterable[str]] | None = None,
             reference: ActionDistribution | None = None) -> MetricsReport:
    """``groups`` maps (simulator, agent) to that campaign's transcripts."""
    capabilities = capabilities or {}
    rows = []
    for (sim, agent), transcripts in groups.items():
        row = {"simulator": sim, "agent": agent}
        row.update(metrics_row(transcripts, reference, capabilities.get(agent, CAPABILITIES)))
        rows.append(row)
    orderings: dict[str, dict[str, list[tuple[str, ...]]]] = {}
    for sim in dict.fromkeys(r["simulator"] for r in rows):
        per_agent = {r["agent"]: {m: r[m] for m in METRICS if r[m] is not None}
                     for r in rows if r["simulator"] == sim}
        if len(per_agent) < 2:
            continue
        orderings[sim] = {}
        for m in METRICS:
            if all(m in v for v in per_agent.values()):
                orderings[sim][m] = rank_agents(per_agent, m)
    return MetricsReport(rows, orderings)
