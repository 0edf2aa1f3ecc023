"""Template-based generation of utterances from structured actions."""
from __future__ import annotations

import csv
import dataclasses as dc
import random
import re
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .domain import SLOT_NAMES, DialogueAction, Speaker, parse_kind
from .nlu import LabeledUtteranceIndex

_PLACEHOLDER = re.compile(r"<([A-Z]+)>")


class CoverageError(KeyError):
    pass


class SlotError(KeyError):
    pass


@dc.dataclass(frozen=True)
class Template:
    text: str
    typo: bool = False

    @property
    def slots(self) -> tuple[str, ...]:
        return tuple(_PLACEHOLDER.findall(self.text))


class TemplateBank:
    def __init__(self, templates: Mapping, speaker: Speaker | str = Speaker.USER):
        self.speaker = Speaker(speaker)
        self.templates = {k: tuple(v) for k, v in templates.items()}
        for kind, group in self.templates.items():
            for t in group:
                bad = [s for s in t.slots if s not in SLOT_NAMES]
                if bad:
                    raise ValueError(f"{kind}: undeclared placeholder {bad[0]!r} in {t.text!r}")

    def kinds(self):
        return tuple(self.templates)

    def covers(self, kinds: Iterable) -> bool:
        return all(self.templates.get(k) for k in kinds)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, bool]], speaker=Speaker.USER) -> "TemplateBank":
        grouped: dict = {}
        for label, text, typo in rows:
            grouped.setdefault(parse_kind(label, speaker), []).append(Template(text, bool(typo)))
        return cls(grouped, speaker)

    @classmethod
    def load(cls, path: str | Path | None = None, speaker=Speaker.USER) -> "TemplateBank":
        speaker = Speaker(speaker)
        if path is None:
            name = "user_templates.csv" if speaker is Speaker.USER else "agent_templates.csv"
            text = resources.files("crsim.data").joinpath(name).read_text("utf-8")
            lines = text.splitlines()
        else:
            lines = Path(path).read_text("utf-8").splitlines()
        rows = [(r["kind"], r["template"], r.get("typo", "0").strip() in ("1", "true", "True"))
                for r in csv.DictReader(lines)]
        return cls.from_rows(rows, speaker)

    def to_index(self, include_typos: bool = True, floor: float | None = None) -> LabeledUtteranceIndex:
        records = [("", kind.label, t.text) for kind, group in self.templates.items()
                   for t in group if include_typos or not t.typo]
        kwargs = {} if floor is None else {"floor": floor}
        return LabeledUtteranceIndex.from_records(records, self.speaker, **kwargs)


def render(action: DialogueAction, bank: TemplateBank, rng: random.Random,
           titles: Mapping[str, str] | None = None) -> str:
    """Pick a template for the action's kind uniformly and fill its placeholders.

    ITEM values are shown by title when ``titles`` knows them.
    """
    group = bank.templates.get(action.kind)
    if not group:
        raise CoverageError(f"no template for {action.kind.label}")
    template = group[int(rng.random() * len(group))]
    values = dict(action.slots)

    def fill(m: re.Match) -> str:
        name = m.group(1)
        if name not in values:
            raise SlotError(f"{action.kind.label}: slot {name} missing for {template.text!r}")
        value = values[name]
        if name == "ITEM" and titles is not None:
            value = titles.get(value, value)
        return value

    return _PLACEHOLDER.sub(fill, template.text)
