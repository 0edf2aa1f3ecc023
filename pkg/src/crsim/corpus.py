"""Annotated dialogue corpora, ratings data and interaction-model estimation."""
from __future__ import annotations

import csv
import dataclasses as dc
import enum
import json
import random
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .domain import (
    AGENT_KINDS, USER_KINDS, AgentActionKind, Agenda, DialogueAction, Speaker,
    TaxonomyError, UserActionKind, parse_kind,
)

DEFAULT_ALPHA = 0.1


class CorpusError(ValueError):
    """Schema violation in an input file."""


class EstimationError(ValueError):
    pass


class EmptyCorpusError(CorpusError, EstimationError):
    pass


class RangeError(ValueError):
    pass


class ReferentialError(KeyError):
    pass


# ---------------------------------------------------------------------------
# dialogue corpus

@dc.dataclass(frozen=True)
class CorpusTurn:
    speaker: Speaker
    utterance: str
    actions: tuple
    entities: tuple[tuple[str, str], ...] = ()


@dc.dataclass(frozen=True)
class AnnotatedDialogue:
    dialogue_id: str
    turns: tuple[CorpusTurn, ...]

    def events(self) -> list:
        """Flattened action sequence across turns, in order."""
        return [a for t in self.turns for a in t.actions]

    def user_actions(self) -> list[UserActionKind]:
        return [a for a in self.events() if isinstance(a, UserActionKind)]


@dc.dataclass(frozen=True)
class AnnotatedDialogueCorpus:
    dialogues: tuple[AnnotatedDialogue, ...]

    def __len__(self):
        return len(self.dialogues)

    def __iter__(self):
        return iter(self.dialogues)


def _parse_dialogue(record: Mapping, lineno: int) -> AnnotatedDialogue:
    try:
        did = str(record["dialogue_id"])
        raw_turns = record["turns"]
    except (KeyError, TypeError):
        raise CorpusError(f"line {lineno}: record needs 'dialogue_id' and 'turns'") from None
    turns = []
    for i, t in enumerate(raw_turns):
        try:
            speaker = Speaker(t["speaker"])
            utterance = t["utterance"]
            labels = t["actions"]
        except (KeyError, TypeError, ValueError):
            raise CorpusError(f"dialogue {did!r} turn {i}: malformed turn") from None
        if not isinstance(utterance, str) or not isinstance(labels, list):
            raise CorpusError(f"dialogue {did!r} turn {i}: malformed turn")
        try:
            actions = tuple(parse_kind(label, speaker) for label in labels)
        except TaxonomyError as e:
            raise TaxonomyError(f"dialogue {did!r} turn {i}: {e}") from None
        entities = tuple((e["mention"], e["id"]) for e in t.get("entities", ()))
        turns.append(CorpusTurn(speaker, utterance, actions, entities))
    return AnnotatedDialogue(did, tuple(turns))


def load_dialogues(source: str | Path) -> AnnotatedDialogueCorpus:
    dialogues = []
    with open(source, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"line {lineno}: invalid JSON ({e.msg})") from None
            dialogues.append(_parse_dialogue(record, lineno))
    if not dialogues:
        raise EmptyCorpusError(f"{source}: no dialogues")
    return AnnotatedDialogueCorpus(tuple(dialogues))


def dialogue_to_record(d: AnnotatedDialogue) -> dict:
    return {"dialogue_id": d.dialogue_id, "turns": [
        {"speaker": t.speaker.value, "utterance": t.utterance,
         "actions": [a.label for a in t.actions],
         "entities": [{"mention": m, "id": i} for m, i in t.entities]}
        for t in d.turns]}


def dump_dialogues(corpus: AnnotatedDialogueCorpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in corpus:
            fh.write(json.dumps(dialogue_to_record(d), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# ratings corpus

@dc.dataclass(frozen=True)
class CatalogItem:
    item_id: str
    title: str
    attributes: tuple[str, ...]


@dc.dataclass(frozen=True)
class RatingsCorpus:
    ratings: Mapping[str, Mapping[str, float]]   # user -> item -> raw rating
    catalog: Mapping[str, CatalogItem]

    def attributes(self) -> dict[str, tuple[str, ...]]:
        return {i: c.attributes for i, c in self.catalog.items()}


def load_catalog(source: str | Path) -> dict[str, CatalogItem]:
    catalog = {}
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"item_id", "title", "attributes"} <= set(reader.fieldnames):
            raise CorpusError(f"{source}: catalog header must be item_id,title,attributes")
        for row in reader:
            attrs = tuple(a for a in row["attributes"].split("|") if a)
            catalog[row["item_id"]] = CatalogItem(row["item_id"], row["title"], attrs)
    return catalog


def load_ratings(source: str | Path, catalog: str | Path | Mapping[str, CatalogItem]) -> RatingsCorpus:
    if not isinstance(catalog, Mapping):
        catalog = load_catalog(catalog)
    ratings: dict[str, dict[str, float]] = {}
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"user_id", "item_id", "rating"} <= set(reader.fieldnames):
            raise CorpusError(f"{source}: ratings header must be user_id,item_id,rating")
        for lineno, row in enumerate(reader, 2):
            try:
                value = float(row["rating"])
            except ValueError:
                raise CorpusError(f"{source}:{lineno}: rating is not a number") from None
            if not 0.5 <= value <= 5.0:
                raise RangeError(f"{source}:{lineno}: rating {value} outside [0.5, 5.0]")
            if row["item_id"] not in catalog:
                raise ReferentialError(f"{source}:{lineno}: item {row['item_id']!r} not in catalog")
            ratings.setdefault(row["user_id"], {})[row["item_id"]] = value
    return RatingsCorpus(ratings, dict(catalog))


def convert_movielens(ratings_in: str | Path, movies_in: str | Path,
                      ratings_out: str | Path, catalog_out: str | Path) -> None:
    """Rewrite MovieLens ``ratings.csv``/``movies.csv`` into the harness schema."""
    with open(movies_in, newline="", encoding="utf-8") as fh, \
            open(catalog_out, "w", newline="", encoding="utf-8") as out:
        w = csv.writer(out)
        w.writerow(["item_id", "title", "attributes"])
        for row in csv.DictReader(fh):
            genres = "" if row["genres"] == "(no genres listed)" else row["genres"]
            w.writerow([row["movieId"], row["title"], genres])
    with open(ratings_in, newline="", encoding="utf-8") as fh, \
            open(ratings_out, "w", newline="", encoding="utf-8") as out:
        w = csv.writer(out)
        w.writerow(["user_id", "item_id", "rating"])
        for row in csv.DictReader(fh):
            w.writerow([row["userId"], row["movieId"], row["rating"]])


# ---------------------------------------------------------------------------
# action-class mappings

class QRFA(str, enum.Enum):
    QUERY = "Query"
    REQUEST = "Request"
    FEEDBACK = "Feedback"
    ANSWER = "Answer"


_FEEDBACK = {UserActionKind.BACK, UserActionKind.MORE, UserActionKind.NOTE, UserActionKind.COMPLETE}
_REQUEST = {AgentActionKind.ELICIT, AgentActionKind.CLARIFY, AgentActionKind.SUGGEST}


def coarse_map(action) -> QRFA:
    kind = action.kind if isinstance(action, DialogueAction) else action
    if isinstance(kind, UserActionKind):
        return QRFA.FEEDBACK if kind in _FEEDBACK else QRFA.QUERY
    return QRFA.REQUEST if kind in _REQUEST else QRFA.ANSWER


CIR6_MAIN = ("Disclose", "Reveal", "Inquire", "Navigate", "Note", "Complete")


def cir6_main(kind: UserActionKind) -> str:
    if kind in (UserActionKind.DISCLOSE, UserActionKind.NON_DISCLOSE):
        return "Disclose"
    if kind is UserActionKind.NOTE:
        return "Note"
    if kind is UserActionKind.COMPLETE:
        return "Complete"
    if kind.group == "Navigate":
        return "Navigate"
    if kind.group == "Inquire":
        return "Inquire"
    return "Reveal"   # Revise, Refine, Expand, Suggest


def members(klass: str) -> tuple[UserActionKind, ...]:
    """Fine user kinds inside a CIR6 main action or a QRFA user class."""
    if klass in CIR6_MAIN:
        return tuple(k for k in USER_KINDS if cir6_main(k) == klass)
    q = QRFA(klass)
    return tuple(k for k in USER_KINDS if coarse_map(k) is q)


# ---------------------------------------------------------------------------
# transition model

def normalize(counts: Mapping[str, int], vocab: Sequence[str], alpha: float) -> dict[str, float]:
    """Add-alpha estimate over ``vocab``; a row with no mass falls back to uniform."""
    total = sum(counts.get(v, 0) for v in vocab) + alpha * len(vocab)
    if total == 0:
        return {v: 1.0 / len(vocab) for v in vocab}
    return {v: (counts.get(v, 0) + alpha) / total for v in vocab}


def _table(counts: Mapping[str, Mapping[str, int]], rows: Sequence[str], cols: Sequence[str],
           alpha: float) -> dict[str, dict[str, float]]:
    return {r: normalize(counts.get(r, {}), cols, alpha) for r in rows}


def _nested_counter(pairs: Iterable[tuple[str, str]]) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = {}
    for a, b in pairs:
        row = out.setdefault(a, {})
        row[b] = row.get(b, 0) + 1
    return {a: dict(sorted(row.items())) for a, row in sorted(out.items())}


_USER = [k.label for k in USER_KINDS]
_AGENT = [k.label for k in AGENT_KINDS]
_QRFA_USER = [QRFA.QUERY.value, QRFA.FEEDBACK.value]


@dc.dataclass(frozen=True)
class TransitionModel:
    """Estimated interaction statistics. All keys are action labels or class names.

    ``counts`` keeps the raw observations so the model can be re-smoothed or audited.
    """
    kind: str                          # "CIR6" or "QRFA"
    alpha: float
    counts: Mapping[str, Mapping]
    start: Mapping[str, float]
    lengths: Mapping[int, float]
    fine: Mapping[str, Mapping[str, float]]          # class -> fine user label -> p
    replacement: Mapping[str, Mapping[str, float]]   # agent label -> fine user label -> p
    transitions: Mapping[str, Mapping[str, float]] = dc.field(default_factory=dict)   # CIR6 main -> main
    agent_given_user: Mapping[str, Mapping[str, float]] = dc.field(default_factory=dict)  # QRFA class -> agent
    user_given_agent: Mapping[str, Mapping[str, float]] = dc.field(default_factory=dict)  # agent -> QRFA class

    def classes(self) -> tuple[str, ...]:
        return CIR6_MAIN if self.kind == "CIR6" else tuple(_QRFA_USER)

    def class_of(self, kind: UserActionKind) -> str:
        return cir6_main(kind) if self.kind == "CIR6" else coarse_map(kind).value

    def conditionals(self) -> list[Mapping[str, float]]:
        rows = [self.start, *self.fine.values(), *self.replacement.values()]
        rows += [*self.transitions.values(), *self.agent_given_user.values(), *self.user_given_agent.values()]
        return rows

    def to_dict(self) -> dict:
        d = dc.asdict(self)
        d["lengths"] = {str(k): v for k, v in self.lengths.items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TransitionModel":
        d = dict(d)
        d["lengths"] = {int(k): v for k, v in d["lengths"].items()}
        return cls(**d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TransitionModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _common_counts(corpus: AnnotatedDialogueCorpus):
    if len(corpus) == 0:
        raise EmptyCorpusError("cannot estimate from an empty corpus")
    starts, lengths, fine_pairs, agent_user, user_agent = Counter(), Counter(), [], [], []
    any_user = False
    for d in corpus:
        events = d.events()
        users = d.user_actions()
        if users:
            any_user = True
            starts[users[0].label] += 1
            lengths[len(users)] += 1
        for prev, nxt in zip(events, events[1:]):
            if isinstance(prev, UserActionKind) and isinstance(nxt, AgentActionKind):
                user_agent.append((prev, nxt))
            elif isinstance(prev, AgentActionKind) and isinstance(nxt, UserActionKind):
                agent_user.append((prev, nxt))
        fine_pairs.extend(users)
    if not any_user:
        raise EstimationError("corpus holds no user actions")
    return starts, lengths, fine_pairs, user_agent, agent_user


def _lengths_dist(lengths: Counter) -> dict[int, float]:
    total = sum(lengths.values())
    return {n: lengths[n] / total for n in sorted(lengths)}


def estimate_cir6(corpus: AnnotatedDialogueCorpus, alpha: float = DEFAULT_ALPHA) -> TransitionModel:
    starts, lengths, users, _, agent_user = _common_counts(corpus)
    bigrams = []
    for d in corpus:
        mains = [cir6_main(k) for k in d.user_actions()]
        bigrams.extend(zip(mains, mains[1:]))
    counts = {
        "start": dict(sorted(starts.items())),
        "lengths": {str(k): v for k, v in sorted(lengths.items())},
        "fine": _nested_counter((cir6_main(k), k.label) for k in users),
        "replacement": _nested_counter((b.label, a.label) for b, a in agent_user),
        "transitions": _nested_counter(bigrams),
    }
    return TransitionModel(
        kind="CIR6", alpha=alpha, counts=counts,
        start=normalize(starts, _USER, alpha),
        lengths=_lengths_dist(lengths),
        fine={m: normalize(counts["fine"].get(m, {}), [k.label for k in members(m)], alpha)
              for m in CIR6_MAIN},
        replacement=_table(counts["replacement"], _AGENT, _USER, alpha),
        transitions=_table(counts["transitions"], CIR6_MAIN, CIR6_MAIN, alpha),
    )


def estimate_qrfa(corpus: AnnotatedDialogueCorpus, alpha: float = DEFAULT_ALPHA) -> TransitionModel:
    starts, lengths, users, user_agent, agent_user = _common_counts(corpus)
    counts = {
        "start": dict(sorted(starts.items())),
        "lengths": {str(k): v for k, v in sorted(lengths.items())},
        "fine": _nested_counter((coarse_map(k).value, k.label) for k in users),
        "replacement": _nested_counter((b.label, a.label) for b, a in agent_user),
        "agent_given_user": _nested_counter((coarse_map(a).value, b.label) for a, b in user_agent),
        "user_given_agent": _nested_counter((b.label, coarse_map(a).value) for b, a in agent_user),
    }
    return TransitionModel(
        kind="QRFA", alpha=alpha, counts=counts,
        start=normalize(starts, _USER, alpha),
        lengths=_lengths_dist(lengths),
        fine={c: normalize(counts["fine"].get(c, {}), [k.label for k in members(c)], alpha)
              for c in _QRFA_USER},
        replacement=_table(counts["replacement"], _AGENT, _USER, alpha),
        agent_given_user=_table(counts["agent_given_user"], _QRFA_USER, _AGENT, alpha),
        user_given_agent=_table(counts["user_given_agent"], _AGENT, _QRFA_USER, alpha),
    )


def estimate(corpus: AnnotatedDialogueCorpus, kind: str, alpha: float = DEFAULT_ALPHA) -> TransitionModel:
    if kind == "CIR6":
        return estimate_cir6(corpus, alpha)
    if kind == "QRFA":
        return estimate_qrfa(corpus, alpha)
    raise ValueError(f"unknown interaction model {kind!r}")


# ---------------------------------------------------------------------------
# sampling helpers

def draw(dist: Mapping, rng: random.Random, exclude: Iterable = ()):
    """Sample a key of ``dist``; excluded keys are masked and the rest renormalized.

    When every remaining key has zero mass the draw is uniform over them.
    """
    exclude = set(exclude)
    keys = [k for k in dist if k not in exclude]
    if not keys:
        raise ValueError("no support left to sample from")
    weights = [dist[k] for k in keys]
    total = sum(weights)
    if total <= 0:
        return keys[int(rng.random() * len(keys))]
    u = rng.random() * total
    acc = 0.0
    for k, w in zip(keys, weights):
        acc += w
        if u < acc:
            return k
    return keys[-1]


def sample_initial_agenda(model: TransitionModel, rng: random.Random, diagram=None) -> Agenda:
    """Draw a length from the corpus histogram, walk the model for all but the
    last slot, and put Complete at the bottom so it executes last."""
    from .interaction import walk_next   # interaction depends on this module

    n = draw(model.lengths, rng)
    complete = UserActionKind.COMPLETE
    sequence: list[UserActionKind] = []
    if n > 1:
        current = UserActionKind(draw(model.start, rng, exclude={complete.label}))
        sequence.append(current)
        while len(sequence) < n - 1:
            current = walk_next(model, current, rng, diagram=diagram)
            sequence.append(current)
    sequence.append(complete)
    # executed first = top of stack = end of list
    return Agenda(DialogueAction(k) for k in reversed(sequence))
