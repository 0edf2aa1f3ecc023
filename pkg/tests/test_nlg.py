import random
import re
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from crsim.domain import USER_KINDS, DialogueAction, UserActionKind
from crsim.nlg import CoverageError, SlotError, Template, TemplateBank, render

U = UserActionKind
SLOTS = (("ATTRIBUTE", "Comedy"), ("ITEM", "m1"), ("SENTIMENT", "love"))


def test_substitution_example():
    bank = TemplateBank({U.DISCLOSE: [Template("I want a <ATTRIBUTE> movie")]})
    out = render(DialogueAction(U.DISCLOSE, (("ATTRIBUTE", "comedy"),)), bank, random.Random(0))
    assert out == "I want a comedy movie"


def test_item_titles_are_shown(user_bank):
    bank = TemplateBank({U.COMPARE: [Template("Is <ITEM> good?")]})
    out = render(DialogueAction(U.COMPARE, (("ITEM", "m1"),)), bank, random.Random(0), {"m1": "Heat (1995)"})
    assert out == "Is Heat (1995) good?"


def test_same_seed_same_choice(user_bank):
    action = DialogueAction(U.DISCLOSE, SLOTS)
    a = [render(action, user_bank, r) for r in [random.Random(3)] for _ in range(20)]
    b = [render(action, user_bank, r) for r in [random.Random(3)] for _ in range(20)]
    assert a == b


def test_four_templates_are_uniform():
    bank = TemplateBank({U.LIST: [Template(f"list {i}") for i in range(4)]})
    rng = random.Random(2024)
    n = 10_000
    counts = Counter(render(DialogueAction(U.LIST), bank, rng) for _ in range(n))
    assert len(counts) == 4
    assert all(0.22 <= c / n <= 0.28 for c in counts.values())


def test_missing_template():
    bank = TemplateBank({U.LIST: [Template("list")]})
    with pytest.raises(CoverageError):
        render(DialogueAction(U.MORE), bank, random.Random(0))


def test_missing_slot():
    bank = TemplateBank({U.DISCLOSE: [Template("I like <ATTRIBUTE>")]})
    with pytest.raises(SlotError):
        render(DialogueAction(U.DISCLOSE), bank, random.Random(0))


def test_undeclared_placeholder_rejected():
    with pytest.raises(ValueError):
        TemplateBank({U.LIST: [Template("in <YEAR>")]})


def test_shipped_bank_covers_every_user_kind(user_bank):
    assert user_bank.covers(USER_KINDS)
    assert any(t.typo for g in user_bank.templates.values() for t in g)


@given(st.sampled_from(USER_KINDS), st.integers(0, 2**32))
def test_no_placeholder_left(user_bank, kind, seed):
    out = render(DialogueAction(kind, SLOTS), user_bank, random.Random(seed))
    assert not re.search(r"<[A-Z]+>", out)


def test_round_trip_with_nlu(user_bank, catalog):
    index = user_bank.to_index()
    titles = {i: c.title for i, c in catalog.items()}
    clean = TemplateBank({k: [t for t in g if not t.typo] for k, g in user_bank.templates.items()})
    rng = random.Random(5)
    items = sorted(catalog)
    for kind in USER_KINDS:
        for template in clean.templates[kind]:
            single = TemplateBank({kind: [template]})
            for _ in range(5):
                slots = (("ATTRIBUTE", rng.choice(["Comedy", "Drama", "Horror"])), ("ITEM", rng.choice(items)),
                         ("SENTIMENT", "love"))
                text = render(DialogueAction(kind, slots), single, rng, titles)
                assert index.classify(text).kind is kind, text
