"""Retrieval-based understanding: nearest labeled utterance plus template-aligned entity linking."""
from __future__ import annotations

import csv
import dataclasses as dc
import re
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

from .domain import SLOT_NAMES, Speaker, parse_kind

DEFAULT_FLOOR = 0.2

_PLACEHOLDER = re.compile(r"<(" + "|".join(SLOT_NAMES) + r")>")
_PUNCT = re.compile(r"[^\w\s]+")


def _slot_token(name: str) -> str:
    return f"__{name.lower()}__"


_SLOT_TOKENS = {_slot_token(n): n for n in SLOT_NAMES}


def normalize(text: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace. Placeholders become ``__slot__`` tokens."""
    text = _PLACEHOLDER.sub(lambda m: f" {_slot_token(m.group(1))} ", text)
    return " ".join(_PUNCT.sub(" ", text.lower()).split())


def similarity(a: str | frozenset, b: str | frozenset) -> float:
    """Token-set overlap |A & B| / |A | B| of normalized texts."""
    sa = a if isinstance(a, frozenset) else frozenset(normalize(a).split())
    sb = b if isinstance(b, frozenset) else frozenset(normalize(b).split())
    if not sa and not sb:
        return 0.0
    common = len(sa & sb)
    return common / (len(sa) + len(sb) - common)


def _common_prefix(a: str, b: str) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


@dc.dataclass(frozen=True)
class IndexEntry:
    text: str           # normalized utterance
    label: str
    template: str = ""  # normalized, with __slot__ tokens

    @property
    def tokens(self) -> frozenset[str]:
        return frozenset(self.text.split())

    def pattern(self) -> re.Pattern | None:
        if not self.template or not any(t in _SLOT_TOKENS for t in self.template.split()):
            return None
        parts = []
        for tok in self.template.split():
            parts.append(f"(?P<{_SLOT_TOKENS[tok]}>.+?)" if tok in _SLOT_TOKENS else re.escape(tok))
        try:
            return re.compile(r" ".join(parts))
        except re.error:     # same slot twice; fall back to plain similarity
            return None


class Classification(NamedTuple):
    kind: object | None     # action kind, None when below the floor
    score: float
    entry: IndexEntry | None


class LabeledUtteranceIndex:
    """Labeled utterances of one speaker side."""

    def __init__(self, entries: Iterable[IndexEntry], speaker: Speaker | str = Speaker.AGENT,
                 floor: float = DEFAULT_FLOOR):
        self.speaker = Speaker(speaker)
        self.floor = floor
        self.entries = tuple(sorted(set(entries), key=lambda e: (e.label, e.text, e.template)))
        if not self.entries:
            raise ValueError("empty utterance index")
        for e in self.entries:
            parse_kind(e.label, self.speaker)
        self._patterns = [e.pattern() for e in self.entries]
        self._tokens = [e.tokens for e in self.entries]
        self._templ_tokens = [frozenset(e.template.split()) for e in self.entries]
        self._cache: dict[str, Classification] = {}
        self._span_cache: dict[str, list] = {}

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, str, str]], speaker=Speaker.AGENT,
                     floor: float = DEFAULT_FLOOR) -> "LabeledUtteranceIndex":
        entries = []
        for utterance, label, template in records:
            text = normalize(utterance) if utterance else normalize(_PLACEHOLDER.sub("", template))
            entries.append(IndexEntry(text, label.strip(), normalize(template) if template else ""))
        return cls(entries, speaker, floor)

    @classmethod
    def load(cls, path: str | Path, speaker=Speaker.AGENT, floor: float = DEFAULT_FLOOR):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [(r["utterance"], r["label"], r.get("template") or "") for r in csv.DictReader(fh)]
        return cls.from_records(rows, speaker, floor)

    def score(self, i: int, query: str, q: frozenset | None = None) -> float:
        q = frozenset(query.split()) if q is None else q
        best = similarity(q, self._tokens[i])
        pat = self._patterns[i]
        if pat is not None:
            m = pat.fullmatch(query)
            if m:
                delex = query
                for name, span in m.groupdict().items():
                    delex = delex.replace(span, _slot_token(name), 1)
                best = max(best, similarity(frozenset(delex.split()), self._templ_tokens[i]))
        return best

    def _best(self, query: str, indices) -> tuple:
        q = frozenset(query.split())
        best_key, best_i = None, None
        for i in indices:
            s = -self.score(i, query, q)
            if best_key is not None and s > best_key[0]:
                continue        # cannot win on score; skip the prefix computation
            entry = self.entries[i]
            # max score, then longest common prefix, then smallest label
            key = (s, -_common_prefix(query, entry.text), entry.label)
            if best_key is None or key < best_key:
                best_key, best_i = key, i
        return best_key, best_i

    def classify(self, utterance: str) -> Classification:
        query = normalize(utterance)
        hit = self._cache.get(query)
        if hit is not None:
            return hit
        best_key, best_i = self._best(query, range(len(self.entries)))
        score = -best_key[0]
        entry = self.entries[best_i]
        kind = parse_kind(entry.label, self.speaker) if score >= self.floor else None
        result = Classification(kind, score, entry if kind is not None else None)
        self._cache[query] = result
        return result


class EntityCatalog:
    """Entity id -> normalized surface forms, each entity typed by the slot it fills."""

    def __init__(self, surface_forms: Mapping[str, tuple[str, ...]], slots: Mapping[str, str]):
        self.surface_forms = dict(surface_forms)
        self.slots = dict(slots)
        self._by_slot: dict[str, list[tuple[str, list[frozenset]]]] = {}
        for eid in sorted(self.surface_forms):
            forms = [frozenset(f.split()) for f in self.surface_forms[eid]]
            self._by_slot.setdefault(self.slots[eid], []).append((eid, forms))
        self._cache: dict = {}

    @classmethod
    def build(cls, entries: Iterable[tuple[str, str, Iterable[str]]]) -> "EntityCatalog":
        forms, slots = {}, {}
        for eid, slot, surfaces in entries:
            normed = tuple(dict.fromkeys(normalize(s) for s in surfaces if normalize(s)))
            if not normed:
                raise ValueError(f"entity {eid!r} has no surface form")
            forms[eid] = normed
            slots[eid] = slot
        return cls(forms, slots)

    @classmethod
    def from_catalog(cls, catalog: Mapping) -> "EntityCatalog":
        """Items (title, and title without a trailing year) plus their attribute values."""
        entries, attributes = [], set()
        for item_id, item in catalog.items():
            bare = re.sub(r"\s*\(\d{4}\)\s*$", "", item.title)
            entries.append((item_id, "ITEM", [item.title, bare]))
            attributes.update(item.attributes)
        entries.extend((a, "ATTRIBUTE", [a]) for a in sorted(attributes))
        return cls.build(entries)

    @classmethod
    def load(cls, path: str | Path) -> "EntityCatalog":
        with open(path, newline="", encoding="utf-8") as fh:
            return cls.build((r["entity_id"], r["slot"], r["surface_forms"].split("|"))
                             for r in csv.DictReader(fh))

    def resolve(self, mention: str, slot: str, floor: float = DEFAULT_FLOOR) -> str | None:
        """Best-scoring entity of the slot type; ties go to the smallest id."""
        key = (mention, slot, floor)
        if key in self._cache:
            return self._cache[key]
        q = frozenset(normalize(mention).split())
        best_score, best_id = -1.0, None
        for eid, forms in self._by_slot.get(slot, ()):   # ids ascending
            s = max(similarity(q, f) for f in forms)
            if s > best_score:
                best_score, best_id = s, eid
        result = best_id if best_id is not None and best_score >= floor else None
        self._cache[key] = result
        return result


def template_spans(index: LabeledUtteranceIndex, utterance: str) -> list[tuple[str, str]]:
    """(slot, span) pairs of the best-scoring template that matches ``utterance`` exactly."""
    query = normalize(utterance)
    cached = index._span_cache.get(query)
    if cached is not None:
        return cached
    best_key, best_match = None, None
    for i, entry in enumerate(index.entries):
        pat = index._patterns[i]
        m = pat.fullmatch(query) if pat is not None else None
        if m:
            key = (-index.score(i, query), entry.label, entry.template)
            if best_key is None or key < best_key:
                best_key, best_match = key, m
    spans = []
    if best_match is not None:
        groups = best_match.groupdict()
        spans = [(slot, groups[slot]) for slot in sorted(groups, key=best_match.start)]
    index._span_cache[query] = spans
    return spans


def link_entities(utterance: str, index: LabeledUtteranceIndex, catalog: EntityCatalog,
                  floor: float | None = None) -> list[tuple[str, str, str]]:
    """Resolve the placeholder spans of the best matching template.

    Returns (mention, slot, entity id) triples in utterance order; unresolved
    placeholders are dropped.
    """
    floor = index.floor if floor is None else floor
    links = []
    for slot, span in template_spans(index, utterance):
        if slot == "SENTIMENT":
            continue
        eid = catalog.resolve(span, slot, floor)
        if eid is not None:
            links.append((span, slot, eid))
    return links
