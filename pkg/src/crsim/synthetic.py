"""Seeded generators for offline fixtures: a movie catalog, ratings and annotated dialogues."""
from __future__ import annotations

import csv
import random
from pathlib import Path
from typing import Mapping

from .corpus import (
    AnnotatedDialogue, AnnotatedDialogueCorpus, CatalogItem, CorpusTurn, RatingsCorpus, dump_dialogues,
)
from .domain import AGENT_KINDS, CompatibilityTable, DialogueAction, Speaker, UserActionKind, default_table
from .nlg import TemplateBank, render

GENRES = ("Action", "Adventure", "Animation", "Comedy", "Crime", "Documentary", "Drama", "Fantasy",
          "Horror", "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western")

_ADJ = ("Silent", "Golden", "Broken", "Hidden", "Crimson", "Frozen", "Distant", "Electric", "Wild",
        "Lonely", "Burning", "Secret", "Midnight", "Iron", "Velvet", "Hollow")
_NOUN = ("River", "Empire", "Garden", "Horizon", "Harbor", "Machine", "Kingdom", "Orchard", "Signal",
         "Lantern", "Canyon", "Voyage", "Mirror", "Citadel", "Meadow", "Tide")

# Ground-truth CIR6 chain used for loopback checks. Every non-terminal state
# completes with the same probability, so conditioning on dialogue length does
# not reshape the path distribution.
HAZARD = 0.15
GROUND_TRUTH = {
    "Disclose": {"Disclose": 0.25, "Reveal": 0.20, "Inquire": 0.25, "Navigate": 0.15},
    "Reveal": {"Disclose": 0.15, "Reveal": 0.15, "Inquire": 0.35, "Navigate": 0.20},
    "Inquire": {"Reveal": 0.15, "Inquire": 0.20, "Navigate": 0.30, "Note": 0.20},
    "Navigate": {"Reveal": 0.10, "Inquire": 0.25, "Navigate": 0.30, "Note": 0.20},
    "Note": {"Reveal": 0.20, "Inquire": 0.35, "Navigate": 0.30},
}
GROUND_TRUTH = {a: {**row, "Complete": HAZARD} for a, row in GROUND_TRUTH.items()}
START = {"Disclose": 0.7, "Reveal": 0.1, "Inquire": 0.2}
FINE = {
    "Disclose": {UserActionKind.DISCLOSE: 0.8, UserActionKind.NON_DISCLOSE: 0.2},
    "Reveal": {UserActionKind.REVISE: 0.2, UserActionKind.REFINE: 0.4, UserActionKind.EXPAND: 0.2,
               UserActionKind.SUGGEST: 0.2},
    "Inquire": {UserActionKind.LIST: 0.3, UserActionKind.COMPARE: 0.2, UserActionKind.SUBSET: 0.2,
                UserActionKind.SIMILAR: 0.3},
    "Navigate": {UserActionKind.REPEAT: 0.2, UserActionKind.BACK: 0.2, UserActionKind.MORE: 0.6},
    "Note": {UserActionKind.NOTE: 1.0},
    "Complete": {UserActionKind.COMPLETE: 1.0},
}


def _pick(dist: Mapping, rng: random.Random):
    u, acc = rng.random(), 0.0
    keys = list(dist)
    for k in keys:
        acc += dist[k]
        if u < acc:
            return k
    return keys[-1]


def make_catalog(n_items: int = 200, seed: int = 0) -> dict[str, CatalogItem]:
    rng = random.Random(seed)
    titles = [f"The {a} {n}" for a in _ADJ for n in _NOUN]
    rng.shuffle(titles)
    catalog = {}
    for k in range(n_items):
        base = titles[k % len(titles)] + (f" {k // len(titles) + 1}" if k >= len(titles) else "")
        year = 1960 + int(rng.random() * 60)
        genres = sorted(rng.sample(GENRES, 1 + int(rng.random() * 3)))
        item_id = str(k + 1)
        catalog[item_id] = CatalogItem(item_id, f"{base} ({year})", tuple(genres))
    return catalog


def make_ratings(catalog: Mapping[str, CatalogItem], n_users: int = 300, seed: int = 0,
                 min_ratings: int = 10, max_ratings: int = 40) -> RatingsCorpus:
    """Users with latent genre tastes; ratings on the half-star 0.5-5 scale."""
    rng = random.Random(seed)
    items = sorted(catalog, key=int)
    ratings: dict[str, dict[str, float]] = {}
    for u in range(1, n_users + 1):
        taste = {g: rng.choice((-1.0, 0.0, 0.0, 1.0)) for g in GENRES}
        chosen = rng.sample(items, min_ratings + int(rng.random() * (max_ratings - min_ratings + 1)))
        row = {}
        for i in chosen:
            affinity = sum(taste[g] for g in catalog[i].attributes) / len(catalog[i].attributes)
            raw = 3.0 + 1.6 * affinity + rng.gauss(0.0, 0.8)
            row[i] = min(5.0, max(0.5, round(raw * 2) / 2))
        ratings[str(u)] = row
    return RatingsCorpus(ratings, dict(catalog))


def write_catalog(catalog: Mapping[str, CatalogItem], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["item_id", "title", "attributes"])
        for c in catalog.values():
            w.writerow([c.item_id, c.title, "|".join(c.attributes)])


def write_ratings(corpus: RatingsCorpus, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "item_id", "rating"])
        for u, row in corpus.ratings.items():
            for i, r in row.items():
                w.writerow([u, i, r])


def sample_user_actions(rng: random.Random, transitions=GROUND_TRUTH, start=START, fine=FINE,
                        max_len: int = 60) -> list[UserActionKind]:
    """One dialogue's user actions from a main-level chain; ends with Complete."""
    main = _pick(start, rng)
    seq = [_pick(fine[main], rng)]
    while main != "Complete" and len(seq) < max_len:
        main = _pick(transitions[main], rng)
        seq.append(_pick(fine[main], rng))
    if seq[-1] is not UserActionKind.COMPLETE:
        seq.append(UserActionKind.COMPLETE)
    return seq


def make_dialogues(n: int, seed: int = 0, catalog: Mapping[str, CatalogItem] | None = None,
                   table: CompatibilityTable | None = None, transitions=GROUND_TRUTH,
                   start=START, fine=FINE, agent_quality: float = 1.0,
                   prefix: str = "d") -> AnnotatedDialogueCorpus:
    """Dialogues whose user side follows the given chain and whose agent answers
    appropriately with probability ``agent_quality`` (an inappropriate answer is
    followed by the user retrying the same act)."""
    rng = random.Random(seed)
    catalog = catalog or make_catalog(seed=seed)
    table = table or default_table()
    user_bank = TemplateBank.load()
    agent_bank = TemplateBank.load(speaker="AGENT")
    titles = {i: c.title for i, c in catalog.items()}
    items = sorted(catalog, key=int)
    dialogues = []
    for d in range(n):
        attribute = rng.choice(GENRES)
        turns = []
        for kind in sample_user_actions(rng, transitions, start, fine):
            while True:
                slots = (("ITEM", rng.choice(items)), ("ATTRIBUTE", attribute), ("SENTIMENT", "loved"))
                text = render(DialogueAction(kind, slots), user_bank, rng, titles)
                turns.append(CorpusTurn(Speaker.USER, text, (kind,)))
                good = sorted(table.accepted(kind), key=lambda k: k.label)
                ok = rng.random() < agent_quality
                pool = good if ok else [k for k in AGENT_KINDS if k not in table.accepted(kind)]
                reply = pool[int(rng.random() * len(pool))]
                text = render(DialogueAction(reply, slots), agent_bank, rng, titles)
                turns.append(CorpusTurn(Speaker.AGENT, text, (reply,)))
                if ok:
                    break
        dialogues.append(AnnotatedDialogue(f"{prefix}{d:04d}", tuple(turns)))
    return AnnotatedDialogueCorpus(tuple(dialogues))


def true_action_distribution(n_samples: int = 200_000, seed: int = 0) -> dict[str, float]:
    """Monte Carlo estimate of the ground-truth chain's fine user-action frequencies."""
    rng = random.Random(seed)
    counts: dict[str, int] = {}
    total = 0
    while total < n_samples:
        for k in sample_user_actions(rng):
            counts[k.label] = counts.get(k.label, 0) + 1
            total += 1
    return {k: v / total for k, v in sorted(counts.items())}


def write_fixtures(out_dir: str | Path, seed: int = 0, n_dialogues: int = 75, n_users: int = 300,
                   n_items: int = 200) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    catalog = make_catalog(n_items, seed)
    ratings = make_ratings(catalog, n_users, seed)
    paths = {"catalog": out / "catalog.csv", "ratings": out / "ratings.csv",
             "dialogues": out / "dialogues.jsonl"}
    write_catalog(catalog, paths["catalog"])
    write_ratings(ratings, paths["ratings"])
    dump_dialogues(make_dialogues(n_dialogues, seed, catalog, agent_quality=0.8), paths["dialogues"])
    return paths

