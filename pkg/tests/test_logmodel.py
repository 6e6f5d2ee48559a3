import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gldb.errors import EmptySplit, ParseError, SchemaInvalid, TimestampUnparseable
from gldb.logmodel import (
    AnomalyLabel,
    AttributeRole,
    LogEntry,
    parse_schema,
    read_log,
    schema_from_dict,
    split_train_test,
    write_log,
)

ARXIV = {
    "timestamp_column": "date",
    "object_delimiter": ";",
    "columns": [
        {"name": "title", "role": "event"},
        {"name": "authors", "role": "object"},
        {"name": "date", "role": "feature"},
    ],
}


def _schema_file(tmp_path, doc):
    p = tmp_path / "schema.json"
    p.write_text(json.dumps(doc))
    return p


def test_arxiv_schema_is_valid(tmp_path):
    s = parse_schema(_schema_file(tmp_path, ARXIV))
    assert s.event_column == "title"
    assert s.object_columns == ["authors"]
    assert s.feature_columns == []
    assert s.columns[1].role is AttributeRole.OBJECT


def test_two_event_columns_rejected(tmp_path):
    doc = dict(ARXIV, columns=ARXIV["columns"] + [{"name": "abstract", "role": "event"}])
    with pytest.raises(SchemaInvalid):
        parse_schema(_schema_file(tmp_path, doc))


def test_no_object_column_rejected():
    doc = dict(ARXIV, columns=[c for c in ARXIV["columns"] if c["role"] != "object"])
    with pytest.raises(SchemaInvalid):
        schema_from_dict(doc)


@pytest.mark.parametrize(
    "doc",
    [
        dict(ARXIV, columns=ARXIV["columns"] + [{"name": "title", "role": "feature"}]),
        dict(ARXIV, timestamp_column="title"),
        {k: v for k, v in ARXIV.items() if k != "timestamp_column"},
        dict(ARXIV, timestamp_column="authors"),
    ],
)
def test_other_schema_violations(doc):
    with pytest.raises(SchemaInvalid):
        schema_from_dict(doc)


def test_schema_hash_is_stable():
    assert schema_from_dict(ARXIV).hash() == schema_from_dict(json.loads(json.dumps(ARXIV))).hash()
    other = dict(ARXIV, object_delimiter=",")
    assert schema_from_dict(other).hash() != schema_from_dict(ARXIV).hash()


def _write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def test_read_log_sorts_by_timestamp(tmp_path):
    p = tmp_path / "log.jsonl"
    _write_jsonl(p, [{"date": t, "title": f"t{t}", "authors": "A"} for t in (5, 3, 7)])
    entries = read_log(p, schema_from_dict(ARXIV))
    assert [e.timestamp for e in entries] == [3, 5, 7]
    assert [e.index for e in entries] == [0, 1, 2]
    assert [e.event_text for e in entries] == ["t3", "t5", "t7"]


def test_ties_keep_file_order(tmp_path):
    p = tmp_path / "log.jsonl"
    _write_jsonl(p, [{"date": 1, "title": x, "authors": "A"} for x in "cab"])
    assert [e.event_text for e in read_log(p, schema_from_dict(ARXIV))] == ["c", "a", "b"]


def test_object_cell_is_split_and_deduplicated(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text('date,title,authors\n1,paper," A;B;A "\n')
    (e,) = read_log(p, schema_from_dict(ARXIV))
    assert e.objects == ("A", "B")


def test_iso_timestamps(tmp_path):
    p = tmp_path / "log.jsonl"
    _write_jsonl(p, [{"date": "1970-01-02T00:00:00Z", "title": "x", "authors": "A"}])
    (e,) = read_log(p, schema_from_dict(ARXIV))
    assert e.timestamp == 86400


def test_bad_timestamp(tmp_path):
    p = tmp_path / "log.jsonl"
    _write_jsonl(p, [{"date": "yesterday", "title": "x", "authors": "A"}])
    with pytest.raises(TimestampUnparseable):
        read_log(p, schema_from_dict(ARXIV))


def test_missing_event_column(tmp_path):
    p = tmp_path / "log.jsonl"
    _write_jsonl(p, [{"date": 1, "authors": "A"}])
    with pytest.raises(ParseError):
        read_log(p, schema_from_dict(ARXIV))


def test_twenty_thousand_rows(tmp_path):
    p = tmp_path / "big.jsonl"
    _write_jsonl(p, [{"date": i, "title": f"e{i % 50}", "authors": f"a{i % 97};a{i % 13}"} for i in range(20_000)])
    assert len(read_log(p, schema_from_dict(ARXIV))) == 20_000


@pytest.mark.parametrize("n,frac,sizes", [(20_000, 0.9, (18_000, 2_000)), (10, 0.5, (5, 5)), (7, 0.5, (3, 4))])
def test_split_sizes(n, frac, sizes):
    log = [LogEntry(i, i, "e", ("a",)) for i in range(n)]
    train, test = split_train_test(log, frac)
    assert (len(train), len(test)) == sizes
    assert train + test == log


def test_split_of_one_entry_is_empty():
    with pytest.raises(EmptySplit):
        split_train_test([LogEntry(0, 0, "e", ("a",))], 0.9)


keys = st.text(alphabet="abcdefgh", min_size=1, max_size=4)
rows = st.lists(
    st.tuples(
        st.integers(0, 50),
        st.text(alphabet=st.characters(codec="utf-8", exclude_categories=("Cs",)), max_size=12),
        st.lists(keys, max_size=4),
        st.booleans(),
    ),
    max_size=25,
)


@given(rows)
@settings(max_examples=60, deadline=None)
def test_jsonl_round_trip(tmp_path_factory, data):
    schema = schema_from_dict(ARXIV)
    raw = []
    for ts, text, objs, bad in data:
        row = {"date": ts, "title": text, "authors": ";".join(objs)}
        if objs:
            row["_label"] = {"event": int(bad), "objects": {o: 0 for o in objs}}
        raw.append(row)
    d = tmp_path_factory.mktemp("rt")
    _write_jsonl(d / "a.jsonl", raw)
    first = read_log(d / "a.jsonl", schema)
    write_log(first, schema, d / "b.jsonl")
    second = read_log(d / "b.jsonl", schema)
    assert first == second
    ts = [e.timestamp for e in first]
    assert ts == sorted(ts)
    assert all(len(set(e.objects)) == len(e.objects) for e in first)


csv_rows = st.lists(
    st.tuples(st.integers(0, 50), st.text(alphabet=st.characters(exclude_categories=("Cs", "Cc")), max_size=12), st.lists(keys, max_size=4), st.booleans()),
    max_size=25,
)


@given(csv_rows)
@settings(max_examples=30, deadline=None)
def test_csv_round_trip(tmp_path_factory, data):
    schema = schema_from_dict(ARXIV)
    d = tmp_path_factory.mktemp("csv")
    entries = [
        LogEntry(i, ts, text, tuple(dict.fromkeys(objs)), object_fields={"authors": tuple(dict.fromkeys(objs))})
        for i, (ts, text, objs, _) in enumerate(sorted(data, key=lambda r: r[0]))
    ]
    write_log(entries, schema, d / "x.csv")
    assert read_log(d / "x.csv", schema) == entries


def test_label_values_checked():
    with pytest.raises(ValueError):
        AnomalyLabel(2, None)
    assert AnomalyLabel(0, {"a": 1}).is_anomalous
    assert not AnomalyLabel(0, {"a": 0}).is_anomalous
