"""Simulated-user preference state: sampled profiles and personal knowledge graphs."""
from __future__ import annotations

import dataclasses as dc
import random
from typing import Mapping, Sequence

from .corpus import RangeError, RatingsCorpus, ReferentialError

LIKED_AT = 4.0
DISLIKED_AT = 2.0
PROFILE_SIZE = 8


class SamplingError(ValueError):
    pass


def rating_to_sentiment(raw: float) -> int:
    if not 0.5 <= raw <= 5.0:
        raise RangeError(f"rating {raw} outside [0.5, 5.0]")
    if raw >= LIKED_AT:
        return 1
    if raw <= DISLIKED_AT:
        return -1
    return 0


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


@dc.dataclass(frozen=True)
class UserProfile:
    user_id: str
    sentiments: Mapping[str, int]   # item id -> r_i, insertion order = sampling order

    def __post_init__(self):
        if not any(r > 0 for r in self.sentiments.values()):
            raise SamplingError("profile needs at least one liked item")

    @property
    def items(self) -> frozenset[str]:
        return frozenset(self.sentiments)

    @property
    def liked(self) -> frozenset[str]:
        return frozenset(i for i, r in self.sentiments.items() if r > 0)

    @property
    def disliked(self) -> frozenset[str]:
        return frozenset(i for i, r in self.sentiments.items() if r < 0)

    @property
    def neutral(self) -> frozenset[str]:
        return frozenset(i for i, r in self.sentiments.items() if r == 0)


def _eligible(ratings: Mapping[str, float], size: int) -> bool:
    return len(ratings) >= size and any(v >= LIKED_AT for v in ratings.values())


def sample_profile(corpus: RatingsCorpus, rng: random.Random, size: int = PROFILE_SIZE) -> UserProfile:
    """Pick an eligible user uniformly, then subsample ``size`` of their rated
    items, redrawing until at least one is liked."""
    users = [u for u, r in corpus.ratings.items() if _eligible(r, size)]
    if not users:
        raise SamplingError(f"no user owns {size} ratings including a liked item")
    user = users[int(rng.random() * len(users))]
    history = corpus.ratings[user]
    items = list(history)
    while True:
        chosen = rng.sample(items, size)
        sentiments = {i: rating_to_sentiment(history[i]) for i in chosen}
        if any(r > 0 for r in sentiments.values()):
            return UserProfile(user, sentiments)


@dc.dataclass(frozen=True)
class PersonalKnowledgeGraph:
    profile: UserProfile
    item_attributes: Mapping[str, tuple[str, ...]]   # edges item -> attributes, items in I_u only
    attribute_ratings: Mapping[str, float]           # r_j

    @property
    def liked_attributes(self) -> frozenset[str]:
        return frozenset(j for j, r in self.attribute_ratings.items() if r > 0)

    @property
    def disliked_attributes(self) -> frozenset[str]:
        return frozenset(j for j, r in self.attribute_ratings.items() if r < 0)

    def items_with(self, attribute: str) -> list[str]:
        return [i for i, attrs in self.item_attributes.items() if attribute in attrs]


def build_pkg(profile: UserProfile, catalog: Mapping[str, Sequence[str]]) -> PersonalKnowledgeGraph:
    edges = {}
    for item in profile.sentiments:
        if item not in catalog:
            raise ReferentialError(f"item {item!r} has no catalog attributes")
        edges[item] = tuple(getattr(catalog[item], "attributes", catalog[item]))
    sums: dict[str, int] = {}
    sizes: dict[str, int] = {}
    for item, attrs in edges.items():
        for j in attrs:
            sums[j] = sums.get(j, 0) + profile.sentiments[item]
            sizes[j] = sizes.get(j, 0) + 1
    ratings = {j: sums[j] / sizes[j] for j in sums}
    return PersonalKnowledgeGraph(profile, edges, ratings)


def answer_consumed(profile: UserProfile, item: str) -> bool:
    return item in profile.sentiments


def answer_preference_single(item: str, rng: random.Random) -> int:
    # deliberately ignores the item: the baseline is inconsistent by design
    return 1 if rng.random() < 0.5 else -1


def answer_preference_pkg(pkg: PersonalKnowledgeGraph, node: str) -> int:
    """Sentiment of an item in I_u, or sign(r_j) of an attribute; 0 without evidence.

    Items take precedence when an id is both an item and an attribute name.
    """
    if node in pkg.profile.sentiments:
        return pkg.profile.sentiments[node]
    if node in pkg.attribute_ratings:
        return _sign(pkg.attribute_ratings[node])
    return 0


def predict_item_sentiment(pkg: PersonalKnowledgeGraph, attributes: Sequence[str]) -> int:
    """Would-be sentiment of an unseen item: sign of the mean r_j over its known attributes."""
    known = [pkg.attribute_ratings[j] for j in attributes if j in pkg.attribute_ratings]
    if not known:
        return 0
    return _sign(sum(known) / len(known))


class SingleItemPreferences:
    """Consumption from the sampled history, preferences by coin flip."""
    kind = "SINGLE"

    def __init__(self, profile: UserProfile, catalog: Mapping[str, Sequence[str]], rng: random.Random):
        self.profile = profile
        self.catalog = catalog
        self.rng = rng

    def consumed(self, item: str) -> bool:
        return answer_consumed(self.profile, item)

    def preference(self, node: str) -> int:
        return answer_preference_single(node, self.rng)

    def favourite_item(self) -> str:
        items = sorted(self.profile.sentiments)
        return items[int(self.rng.random() * len(items))]

    def favourite_attribute(self) -> str | None:
        attrs = sorted({a for i in self.profile.sentiments for a in self.catalog.get(i, ())})
        return attrs[int(self.rng.random() * len(attrs))] if attrs else None

    def would_accept(self, item: str) -> bool:
        return False


class PkgPreferences:
    """Answers every preference query from the personal knowledge graph."""
    kind = "PKG"

    def __init__(self, profile: UserProfile, catalog: Mapping[str, Sequence[str]], rng: random.Random):
        self.profile = profile
        self.catalog = catalog
        self.rng = rng
        self.pkg = build_pkg(profile, catalog)

    def consumed(self, item: str) -> bool:
        return answer_consumed(self.profile, item)

    def preference(self, node: str) -> int:
        if node not in self.profile.sentiments and node in self.catalog:
            return predict_item_sentiment(self.pkg, self.catalog[node])
        return answer_preference_pkg(self.pkg, node)

    def favourite_item(self) -> str:
        liked = sorted(self.profile.liked)
        return liked[int(self.rng.random() * len(liked))]

    def favourite_attribute(self) -> str | None:
        ratings = self.pkg.attribute_ratings
        liked = sorted(self.pkg.liked_attributes, key=lambda j: (-ratings[j], j))
        return liked[0] if liked else None

    def would_accept(self, item: str) -> bool:
        """A recommendation ends the search when unseen and predicted liked."""
        return not self.consumed(item) and self.preference(item) > 0
