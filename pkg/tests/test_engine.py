import dataclasses as dc
import json
import random
import socket

import pytest

from crsim.domain import USER_KINDS, Speaker, Status, UserActionKind
from crsim.engine import ConfigError, profile_signature, run_campaign, run_dialogue, verify_transcript
from crsim.evaluation import success_rate
from crsim.preference import PkgPreferences, sample_profile
from crsim.synthetic import make_ratings
from crsim.transport import AgentEndpoint, encode

U = UserActionKind


@pytest.mark.parametrize("oracle", [True, False])
def test_perfect_agent_pulls_every_turn(make_sim, make_stub, oracle):
    sim = make_sim("CIR6", "SINGLE", oracle_nlu=oracle)
    endpoint = make_stub(oracle=oracle)
    for seed in range(15):
        t = run_dialogue(sim, endpoint, seed)
        assert t.status is Status.COMPLETED
        assert len(t.user_turns) == len(t.initial_agenda)
        assert all(a.goal_satisfied for a in t.agent_turns)
        assert [u.actions[0].kind.label for u in t.user_turns] == list(t.initial_agenda)


def test_silent_agent_hits_turn_cap(make_sim, make_stub):
    sim = make_sim("CIR6", "SINGLE")
    endpoint = make_stub("SILENT", "SCRIPTED", script={k.label: "" for k in USER_KINDS})
    for seed in range(10):
        t = run_dialogue(sim, endpoint, seed)
        assert t.status is Status.TURN_CAP_REACHED and len(t.user_turns) == 50
        assert not any(a.goal_satisfied for a in t.agent_turns)


class _RecommendOnThirdTurn:
    """Elicits twice, recommends an unseen item the user is predicted to like, then says goodbye."""

    def __init__(self, item, title):
        self.item, self.title = item, title
        self.turns = {}

    def handle_line(self, line):
        req = json.loads(line)
        n = self.turns[req["conversation_id"]] = self.turns.get(req["conversation_id"], 0) + 1
        if n < 3:
            text = "Could you give me one movie you like?"
        else:
            text = f"I recommend {self.title}." if n == 3 else "Enjoy your movie and see you next time."
        return encode({"utterance": text})


def test_pkg_stops_after_a_liked_recommendation(make_sim, ratings):
    sim = make_sim("CIR6", "PKG")
    checked = 0
    for seed in range(40):
        profile = sample_profile(ratings, random.Random(seed))
        prefs = PkgPreferences(profile, ratings.attributes(), random.Random(0))
        liked = [i for i in sorted(ratings.catalog) if prefs.would_accept(i)]
        if not liked:
            continue
        item = liked[0]
        endpoint = AgentEndpoint("rec3", "inproc", handler=_RecommendOnThirdTurn(item, ratings.catalog[item].title))
        t = run_dialogue(sim, endpoint, seed)
        if len(t.initial_agenda) < 5:
            continue
        checked += 1
        assert t.status is Status.COMPLETED
        assert len(t.user_turns) <= 4
        assert "early_stop" in (t.agent_turns[2].note or "")
    assert checked >= 3


def test_campaign_needs_dialogues(make_sim, make_stub):
    with pytest.raises(ValueError):
        run_campaign(make_sim(), make_stub(), 0)


def test_campaign_is_deterministic(make_sim, make_stub):
    for name in ("QRFA", "CIR6"):
        sim = make_sim(name, "SINGLE")
        a = run_campaign(sim, make_stub("F", "FLAKY", 0.7), 20, base_seed=7)
        b = run_campaign(sim, make_stub("F", "FLAKY", 0.7), 20, base_seed=7, workers=4)
        assert a == b
        assert [t.seed for t in a] == list(range(7, 27))


def test_distinct_profiles(make_sim, catalog):
    sim = make_sim(ratings=make_ratings(catalog, n_users=1000, seed=2))
    sigs = [profile_signature(sim, seed) for seed in range(100)]
    assert len(set(sigs)) == 100


def test_transcripts_verify_and_respect_bounds(make_sim, make_stub):
    for interaction, preference in (("QRFA", "SINGLE"), ("CIR6", "SINGLE"), ("CIR6", "PKG")):
        sim = make_sim(interaction, preference)
        for t in run_campaign(sim, make_stub("F", "FLAKY", 0.6), 25, base_seed=3):
            assert verify_transcript(t)
            assert len(t.user_turns) <= 50
            if t.status is Status.COMPLETED:
                assert t.user_turns[-1].actions[0].kind is U.COMPLETE
            speakers = [turn.speaker for turn in t.turns]
            assert all(a is not b for a, b in zip(speakers, speakers[1:]))


def test_tampered_transcript_fails_verification(make_sim, make_stub):
    t = run_dialogue(make_sim(), make_stub(), 1)
    turns = list(t.turns)
    turns[1] = dc.replace(turns[1], goal_satisfied=not turns[1].goal_satisfied)
    assert not verify_transcript(dc.replace(t, turns=tuple(turns)))


def test_agent_first_opening(make_sim, make_stub):
    t = run_dialogue(make_sim(user_first=False), make_stub(), 2)
    assert t.turns[0].speaker is Speaker.AGENT and t.turns[0].note == "opening"
    assert t.turns[0].actions[0].kind.label == "Inquire.Elicit"
    assert t.status is Status.COMPLETED


def test_unreachable_agent_is_recorded_not_raised(make_sim):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    endpoint = AgentEndpoint("gone", f"tcp:127.0.0.1:{port}", timeout=1)
    ts = run_campaign(make_sim(), endpoint, 3)
    assert [t.status for t in ts] == [Status.AGENT_ERROR] * 3


class _DiesAfterTwo:
    def __init__(self):
        self.n = 0

    def handle_line(self, line):
        self.n += 1
        return encode({"utterance": "Could you give me one movie you like?"}) if self.n <= 2 else "garbage\n"


def test_protocol_failure_midway(make_sim):
    t = run_dialogue(make_sim(), AgentEndpoint("bad", "inproc", handler=_DiesAfterTwo()), 4)
    if len(t.initial_agenda) > 2:
        assert t.status is Status.AGENT_ERROR
        assert t.turns[-1].note.startswith("error")


def test_invalid_simulator_combination(make_sim, models):
    with pytest.raises(ConfigError):
        make_sim("QRFA", "PKG")
    with pytest.raises(ConfigError):
        make_sim("CIR6", "SINGLE", model=models["QRFA"])
    with pytest.raises(ConfigError):
        make_sim(turn_cap=0)


@pytest.mark.parametrize("interaction,preference", [("QRFA", "SINGLE"), ("CIR6", "SINGLE"), ("CIR6", "PKG")])
def test_stub_quality_shows_in_success_rate(make_sim, make_stub, interaction, preference):
    sim = make_sim(interaction, preference)
    assert success_rate(run_campaign(sim, make_stub(), 100)) == 1.0
    assert 0.75 <= success_rate(run_campaign(sim, make_stub("F", "FLAKY", 0.8), 100)) <= 0.85
