import json
import random
from collections import Counter
from fractions import Fraction

import pytest

from crsim.corpus import (
    CIR6_MAIN, QRFA, AnnotatedDialogue, AnnotatedDialogueCorpus, CorpusError, CorpusTurn, EmptyCorpusError,
    EstimationError, RangeError, ReferentialError, TransitionModel, coarse_map, convert_movielens, draw,
    dump_dialogues, estimate, estimate_cir6, estimate_qrfa, load_catalog, load_dialogues, load_ratings,
    members, sample_initial_agenda,
)
from crsim.domain import AGENT_KINDS, USER_KINDS, AgentActionKind, Speaker, TaxonomyError, UserActionKind

from oracles import cir6_oracle, qrfa_oracle, random_corpus_records

U, A = UserActionKind, AgentActionKind


def _write_records(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def _dialogue(did, *pairs):
    """Dialogue from (user label, agent label) exchanges."""
    turns = []
    for u, a in pairs:
        turns.append({"speaker": "USER", "utterance": "u", "actions": [u]})
        if a:
            turns.append({"speaker": "AGENT", "utterance": "a", "actions": [a]})
    return {"dialogue_id": did, "turns": turns}


def test_load_two_dialogues(tmp_path):
    recs = [_dialogue("a", ("Reveal.Disclose", "Inquire.Elicit")), _dialogue("b", ("Inquire.List", "Reveal.List"))]
    corpus = load_dialogues(_write_records(tmp_path / "c.jsonl", recs))
    assert len(corpus) == 2
    assert corpus.dialogues[1].turns[1].actions == (A.LIST,)


def test_misspelled_label_names_the_turn(tmp_path):
    rec = _dialogue("bad", ("Reveal.Disclose", "Inquire.Elict"))
    with pytest.raises(TaxonomyError, match=r"'bad' turn 1"):
        load_dialogues(_write_records(tmp_path / "c.jsonl", [rec]))


def test_empty_file(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text("")
    with pytest.raises(EmptyCorpusError):
        load_dialogues(p)


def test_malformed_turn_names_dialogue(tmp_path):
    rec = {"dialogue_id": "m", "turns": [{"speaker": "USER", "utterance": "x"}]}
    with pytest.raises(CorpusError, match="'m' turn 0"):
        load_dialogues(_write_records(tmp_path / "c.jsonl", [rec]))


def test_dump_load_round_trip(tmp_path, corpus):
    p = tmp_path / "c.jsonl"
    dump_dialogues(corpus, p)
    assert load_dialogues(p) == corpus


@pytest.fixture
def tiny_catalog(tmp_path):
    p = tmp_path / "catalog.csv"
    p.write_text("item_id,title,attributes\nm7,Heat (1995),Crime|Thriller\nm8,Up (2009),Animation\n")
    return p


def _ratings(tmp_path, rows):
    p = tmp_path / "ratings.csv"
    p.write_text("user_id,item_id,rating\n" + "".join(f"{u},{i},{r}\n" for u, i, r in rows))
    return p


def test_ratings_in_range_accepted(tmp_path, tiny_catalog):
    rc = load_ratings(_ratings(tmp_path, [("u1", "m7", 4.5)]), tiny_catalog)
    assert rc.ratings == {"u1": {"m7": 4.5}}
    assert rc.catalog["m7"].attributes == ("Crime", "Thriller")


def test_rating_out_of_range(tmp_path, tiny_catalog):
    with pytest.raises(RangeError):
        load_ratings(_ratings(tmp_path, [("u1", "m7", 5.5)]), tiny_catalog)


def test_dangling_item(tmp_path, tiny_catalog):
    with pytest.raises(ReferentialError):
        load_ratings(_ratings(tmp_path, [("u1", "m99", 3.0)]), tiny_catalog)


def test_convert_movielens(tmp_path):
    (tmp_path / "movies.csv").write_text(
        'movieId,title,genres\n1,Toy Story (1995),Adventure|Animation\n2,"Odd, Film (1990)",(no genres listed)\n')
    (tmp_path / "ml.csv").write_text("userId,movieId,rating,timestamp\n1,1,4.0,964982703\n1,2,0.5,1\n")
    convert_movielens(tmp_path / "ml.csv", tmp_path / "movies.csv", tmp_path / "r.csv", tmp_path / "c.csv")
    rc = load_ratings(tmp_path / "r.csv", tmp_path / "c.csv")
    assert rc.ratings["1"] == {"1": 4.0, "2": 0.5}
    assert load_catalog(tmp_path / "c.csv")["2"].attributes == ()


def test_coarse_map_examples():
    assert coarse_map(U.DISCLOSE) is QRFA.QUERY
    assert coarse_map(U.NON_DISCLOSE) is QRFA.QUERY
    assert coarse_map(U.NOTE) is QRFA.FEEDBACK
    assert coarse_map(A.ELICIT) is QRFA.REQUEST
    assert coarse_map(A.SHOW) is QRFA.ANSWER


def test_coarse_map_partitions_each_side():
    assert {coarse_map(k) for k in USER_KINDS} == {QRFA.QUERY, QRFA.FEEDBACK}
    assert {coarse_map(k) for k in AGENT_KINDS} == {QRFA.REQUEST, QRFA.ANSWER}
    assert set(members("Feedback")) == {U.BACK, U.MORE, U.NOTE, U.COMPLETE}
    assert sorted(members("Query") + members("Feedback")) == sorted(USER_KINDS)


def test_cir6_main_partition():
    assert sorted(k for m in CIR6_MAIN for k in members(m)) == sorted(USER_KINDS)


def _corpus(*dialogues):
    return AnnotatedDialogueCorpus(tuple(dialogues))


def _dlg(did, users, agent=A.ELICIT):
    turns = []
    for u in users:
        turns += [CorpusTurn(Speaker.USER, "", (u,)), CorpusTurn(Speaker.AGENT, "", (agent,))]
    return AnnotatedDialogue(did, tuple(turns))


def test_cir6_bigram_example():
    c = _corpus(*[_dlg(f"i{i}", [U.DISCLOSE, U.LIST]) for i in range(3)], _dlg("r", [U.DISCLOSE, U.REFINE]))
    m = estimate_cir6(c, alpha=0)
    assert m.transitions["Disclose"]["Inquire"] == 0.75
    assert m.transitions["Disclose"]["Reveal"] == 0.25


def test_single_action_corpus_gives_smoothed_uniform_rows():
    m = estimate_cir6(_corpus(_dlg("one", [U.DISCLOSE])))
    for row in m.transitions.values():
        assert all(p == pytest.approx(1 / 6) for p in row.values())


def test_qrfa_two_step_example():
    # (Query, Elicit, Query) twice and (Query, Elicit, Feedback) once
    c = _corpus(_dlg("a", [U.DISCLOSE, U.LIST]), _dlg("b", [U.REFINE, U.EXPAND]), _dlg("c", [U.SIMILAR, U.MORE]))
    m = estimate_qrfa(c, alpha=0)
    assert m.user_given_agent["Inquire.Elicit"]["Query"] == pytest.approx(2 / 3, abs=0)
    assert m.user_given_agent["Inquire.Elicit"]["Feedback"] == pytest.approx(1 / 3, abs=0)


def test_qrfa_feedback_fine_sampler_stays_in_class(models, rng):
    feedback = {k.label for k in members("Feedback")}
    for _ in range(500):
        assert draw(models["QRFA"].fine["Feedback"], rng) in feedback


def test_rows_sum_to_one(models):
    for m in models.values():
        for row in m.conditionals():
            assert abs(sum(row.values()) - 1) <= 1e-9
            assert all(p > 0 for p in row.values())


def test_empty_corpus_is_an_estimation_error():
    for kind in ("CIR6", "QRFA"):
        with pytest.raises(EstimationError):
            estimate(_corpus(), kind)


@pytest.mark.parametrize("seed", range(5))
def test_estimates_match_brute_force_oracle(tmp_path, seed):
    records = random_corpus_records(random.Random(seed))
    corpus = load_dialogues(_write_records(tmp_path / "c.jsonl", records))
    cir6, qrfa = estimate_cir6(corpus, alpha=0), estimate_qrfa(corpus, alpha=0)
    want = cir6_oracle(records)
    for table in ("transitions", "fine", "replacement"):
        for row, cols in want[table].items():
            for col, p in cols.items():
                assert Fraction(getattr(cir6, table)[row][col]) == Fraction(float(p))
    want = qrfa_oracle(records)
    for table in ("agent_given_user", "user_given_agent", "replacement", "fine"):
        for row, cols in want[table].items():
            for col, p in cols.items():
                assert getattr(qrfa, table)[row][col] == float(p)


def test_estimation_is_reproducible(corpus):
    a, b = estimate_cir6(corpus), estimate_cir6(corpus)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_model_persistence_round_trip(tmp_path, models):
    for m in models.values():
        m.save(tmp_path / "m.json")
        assert TransitionModel.load(tmp_path / "m.json") == m


def test_initial_agenda_deterministic(models):
    a = sample_initial_agenda(models["CIR6"], random.Random(5))
    b = sample_initial_agenda(models["CIR6"], random.Random(5))
    assert a == b


@pytest.mark.parametrize("kind", ["CIR6", "QRFA"])
def test_initial_agenda_shape_and_length_distribution(models, kind):
    model = models[kind]
    rng = random.Random(11)
    lengths = Counter()
    n = 10_000
    for _ in range(n):
        agenda = sample_initial_agenda(model, rng)
        kinds = [a.kind for a in agenda.bottom_to_top()]
        assert kinds.count(U.COMPLETE) == 1 and kinds[0] is U.COMPLETE   # executed last
        lengths[len(agenda)] += 1
    tv = 0.5 * sum(abs(lengths[k] / n - model.lengths.get(k, 0)) for k in set(lengths) | set(model.lengths))
    assert tv <= 0.05
