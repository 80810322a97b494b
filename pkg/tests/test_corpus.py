import datetime
import json

import pytest
from hypothesis import given, strategies as st

from crag import corpus
from crag.corpus import (
    Dialogue,
    Mention,
    Speaker,
    Split,
    Utterance,
)
from crag.errors import CorpusError


def dlg(did, date, split, *turns):
    parsed = tuple(
        Utterance(Speaker(s), text, tuple(Mention(t, a) for t, a in ms))
        for s, text, ms in turns
    )
    return Dialogue(did, parsed, datetime.date.fromisoformat(date), split)


def test_ingest_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert corpus.ingest_dialogues(path) == []


def test_ingest_malformed_line_reports_lineno(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "date": "2022-01-01", "turns": [{"speaker": "USER", "text": "hi"}]}\nnot json\n')
    with pytest.raises(CorpusError, match="line 2"):
        corpus.ingest_dialogues(path)


def test_ingest_unknown_speaker(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "date": "2022-01-01", "turns": [{"speaker": "BOT", "text": "hi"}]}\n')
    with pytest.raises(CorpusError, match="speaker"):
        corpus.ingest_dialogues(path)


def test_date_split_rule(tmp_path):
    lines = [
        {"id": "a", "date": "2022-03-01", "turns": [{"speaker": "USER", "text": "x"}]},
        {"id": "b", "date": "2022-11-15", "turns": [{"speaker": "USER", "text": "x"}]},
        {"id": "c", "date": "2022-12-02", "turns": [{"speaker": "USER", "text": "x"}]},
    ]
    path = tmp_path / "d.jsonl"
    path.write_text("\n".join(json.dumps(o) for o in lines) + "\n")
    out = {d.id: d.split for d in corpus.ingest_dialogues(path)}
    assert out == {"a": Split.TRAIN, "b": Split.VALID, "c": Split.TEST}


def test_roundtrip(demo_dialogues, tmp_path):
    path = tmp_path / "rt.jsonl"
    corpus.write_dialogues(demo_dialogues, path)
    back = corpus.ingest_dialogues(path)
    assert back == demo_dialogues


def test_item_database_catalog_definition():
    d = dlg("x", "2022-01-01", Split.TRAIN,
            ("USER", "i liked A", [("A", 2)]),
            ("SYSTEM", "try B", [("B", 0)]))
    db = corpus.build_item_database([d])
    a, b = db.records[db.item_id("A")], db.records[db.item_id("B")]
    assert not a.in_catalog and a.catalog_id is None
    assert b.in_catalog and b.catalog_id == 0


def test_reid_is_dense_bijection(demo_db):
    # records are in item_id order, so catalog ids must come out 0,1,2,...
    cids = [r.catalog_id for r in demo_db.records if r.in_catalog]
    assert cids == list(range(demo_db.n_catalog))
    items = [r.item_id for r in demo_db.records if r.in_catalog]
    assert demo_db.catalog_item_ids == items


def test_release_year_from_title_and_sidecar():
    d = dlg("x", "2022-01-01", Split.TRAIN,
            ("SYSTEM", "Heat (1995) and Ran", [("Heat (1995)", 0), ("Ran", 0)]))
    db = corpus.build_item_database([d], metadata={"Ran": 1985})
    assert db.records[db.item_id("Heat (1995)")].release_year == 1995
    assert db.records[db.item_id("Ran")].release_year == 1985


def test_interactions_positivity():
    d = dlg("x", "2022-01-01", Split.TRAIN,
            ("USER", "loved A", [("A", 2)]),
            ("SYSTEM", "try B", [("B", 0)]))
    db = corpus.build_item_database([d])
    R = corpus.build_interactions([d], db)
    row = R.matrix.toarray()[0]
    assert row[db.item_id("A")] == 1 and row[db.item_id("B")] == 1


def test_interactions_negative_excluded():
    d = dlg("x", "2022-01-01", Split.TRAIN,
            ("USER", "hated A", [("A", -2)]),
            ("SYSTEM", "ok B", [("B", 0)]))
    db = corpus.build_item_database([d])
    R = corpus.build_interactions([d], db)
    assert R.matrix.toarray()[0, db.item_id("A")] == 0
    assert R.matrix[0].sum() == 1  # row retained, B only


def test_interactions_disjoint_hand_count():
    ds = [
        dlg("1", "2022-01-01", Split.TRAIN, ("USER", "a", [("A", 2)]),
            ("SYSTEM", "s", [("S", 0)])),
        dlg("2", "2022-01-02", Split.TRAIN, ("USER", "b", [("B", 2)]),
            ("SYSTEM", "s", [("S", -1)])),
        dlg("3", "2022-01-03", Split.TRAIN, ("USER", "c", [("C", 2)]),
            ("SYSTEM", "s", [("S", -1)])),
    ]
    db = corpus.build_item_database(ds)
    R = corpus.build_interactions(ds, db)
    assert R.matrix.shape == (3, db.n_items)
    assert list(R.matrix.sum(axis=1).flat) == [2, 1, 1]  # dialogue 1 has S at 0


def test_interactions_unknown_item_errors(demo_db):
    d = dlg("x", "2022-01-01", Split.TRAIN,
            ("USER", "??", [("No Such Movie", 2)]))
    with pytest.raises(CorpusError, match="unknown item"):
        corpus.build_interactions([d], demo_db)


@given(st.permutations(list(range(4))))
def test_interactions_order_independent(perm):
    mentions = [("A", 2), ("B", 1), ("C", 0), ("B", 2)]
    shuffled = [mentions[i] for i in perm]
    base = dlg("x", "2022-01-01", Split.TRAIN, ("USER", "t", mentions))
    other = dlg("x", "2022-01-01", Split.TRAIN, ("USER", "t", shuffled))
    db = corpus.build_item_database([base])
    a = corpus.build_interactions([base], db).matrix.toarray()
    b = corpus.build_interactions([other], db).matrix.toarray()
    assert (a == b).all()


def test_eval_records_one_per_groundtruth(demo_db):
    d = dlg("x", "2022-12-01", Split.TEST,
            ("USER", "q", [("City of God", 2)]),
            ("SYSTEM", "r", [("Elite Squad", 0), ("Elite Squad 2", 0),
                             ("The Enemy Within", 0)]))
    recs = corpus.make_eval_records([d], demo_db)
    assert len(recs) == 3
    assert all(r.prefix.turns == d.turns[:1] for r in recs)
    assert all(not r.cold_start for r in recs)


def test_eval_records_skip_noncatalog(demo_db):
    # Bacurau is user-only in the demo corpus, so not recommendable.
    d = dlg("x", "2022-12-01", Split.TEST,
            ("USER", "q", []),
            ("SYSTEM", "r", [("Bacurau", 0)]))
    assert corpus.make_eval_records([d], demo_db) == []


def test_eval_records_cold_start_flag(demo_db):
    d = dlg("x", "2022-12-01", Split.TEST,
            ("USER", "no mentions here", []),
            ("SYSTEM", "r", [("Parasite", 0)]))
    (rec,) = corpus.make_eval_records([d], demo_db)
    assert rec.cold_start


def test_eval_record_count_invariant(demo_test, demo_db, demo_records):
    expected = 0
    for d in demo_test:
        for turn in d.turns:
            if turn.speaker is Speaker.SYSTEM:
                expected += sum(
                    1 for m in turn.mentions
                    if m.title in demo_db.title_to_id
                    and demo_db.catalog_id(demo_db.item_id(m.title)) is not None
                )
    assert len(demo_records) == expected


def test_interactions_file_roundtrip(demo_train, demo_db, tmp_path):
    R = corpus.build_interactions(demo_train, demo_db)
    path = tmp_path / "r.bin"
    corpus.save_interactions(R, path)
    back = corpus.load_interactions(path)
    assert (back.matrix.toarray() == R.matrix.toarray()).all()
    assert path.read_bytes()[:8] == b"CRAGRMAT"
