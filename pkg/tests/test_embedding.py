import hashlib
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gldb.embedding import (
    EmbedderKind,
    EventFeaturizer,
    TextEmbedderSpec,
    TimeEncodingSpec,
    event_feature,
    hash_embed,
    lookup_embed,
    text_key,
    time_encode,
)
from gldb.errors import DimensionMismatch, MissingEmbedding

# sha256 of the little-endian float64 bytes, frozen from the reference build
GOLDEN = {
    "": ("e80232b4d18d0bb7e794be263ba937626f383f9917d4b8a737ba893a8f752293", 0),
    "hello world": ("a0e5b231814fdf1303ef39321b8caced5e4b443e892dc4a8acecf183b48bb94c", 22),
    "Receiving block blk_-1608999687919862906 src: /10.250.19.102": (
        "f97bd0d94db6f1b95c4b351c99eee0b04bb39a758c29ad0fa15e6360bd3f06ba",
        115,
    ),
    "Graph attention networks": ("b655bbe24a29f62998965aab899875ad755b583e1e9958997c2230d8ac15fd47", 57),
    "naïve café ☕": ("d06de39be60a7f60191036a6decc4b64e7bcc8b135cf2446a98120c76f01a396", 22),
}


@pytest.mark.parametrize("text", list(GOLDEN))
def test_hash_embed_golden(text):
    v = hash_embed(text, TextEmbedderSpec())
    digest, nnz = GOLDEN[text]
    assert v.shape == (384,)
    assert hashlib.sha256(v.astype("<f8").tobytes()).hexdigest() == digest
    assert np.count_nonzero(v) == nnz


def _reference_embed(text, dim=384, lo=3, hi=5):
    # independent restatement of the bucket/sign rule with plain dicts
    acc = {}
    for word in text.split():
        s = "<" + word + ">"
        for n in range(lo, hi + 1):
            for i in range(len(s) - n + 1):
                raw = hashlib.blake2b(s[i : i + n].encode(), digest_size=8, key=b"gldb-ngram-v1").digest()
                h = int.from_bytes(raw, "little")
                acc[h % dim] = acc.get(h % dim, 0) + (-1 if h >= 2**63 else 1)
    v = np.zeros(dim)
    for k, c in acc.items():
        v[k] = c
    norm = math.sqrt(sum(c * c for c in acc.values()))
    return v / norm if norm else v


@pytest.mark.parametrize("text", ["abc", "hello world", "x" * 40, "naïve café ☕", " a  b\tcd "])
def test_hash_embed_matches_reference(text):
    np.testing.assert_allclose(hash_embed(text, TextEmbedderSpec()), _reference_embed(text), atol=1e-12)


@pytest.mark.parametrize("text", ["", " ", "\t\n  "])
def test_text_without_words_is_zero_vector(text):
    assert not hash_embed(text, TextEmbedderSpec()).any()


def test_word_order_and_spacing_do_not_matter():
    spec = TextEmbedderSpec()
    assert np.array_equal(hash_embed("alpha beta gamma", spec), hash_embed("gamma  alpha\tbeta", spec))
    assert not np.array_equal(hash_embed("alpha beta", spec), hash_embed("alphabeta", spec))


@given(st.text(min_size=1, max_size=60).filter(lambda t: t.split()))
@settings(max_examples=200, deadline=None)
def test_nonempty_text_has_unit_norm(text):
    v = hash_embed(text, TextEmbedderSpec())
    assert abs(np.linalg.norm(v) - 1) < 1e-6
    assert np.array_equal(v, hash_embed(text, TextEmbedderSpec()))


def test_unnormalised_counts_are_integers():
    v = hash_embed("hello world", TextEmbedderSpec(normalize=False))
    assert np.array_equal(v, np.round(v))
    # 13 padded chars give 11 + 10 + 9 grams
    assert np.abs(v).sum() >= np.abs(v.sum()) and np.abs(v).sum() <= 30


def _table(tmp_path, rows):
    p = tmp_path / "t.jsonl"
    p.write_text("".join(json.dumps({"key": k, "vec": list(v)}) + "\n" for k, v in rows))
    return p


def test_lookup_present(tmp_path):
    vec = np.linspace(-1, 1, 384)
    spec = TextEmbedderSpec(kind=EmbedderKind.PRECOMPUTED, table_path=str(_table(tmp_path, [(text_key("a"), vec)])))
    fz = EventFeaturizer(spec)
    np.testing.assert_array_equal(fz("a", 0)[:384], vec)


def test_lookup_missing():
    with pytest.raises(MissingEmbedding):
        lookup_embed("nope", TextEmbedderSpec(), {})


def test_lookup_wrong_dim():
    with pytest.raises(DimensionMismatch):
        lookup_embed("k", TextEmbedderSpec(), {"k": np.zeros(128)})


def test_time_encode_at_reference():
    v = time_encode(500, TimeEncodingSpec(t_ref=500))
    np.testing.assert_array_equal(v, np.tile([0.0, 1.0], 8))


def test_time_encode_scalar():
    v = time_encode(1, TimeEncodingSpec(dim=2, t_ref=0, scale=1))
    np.testing.assert_allclose(v, [0.84147, 0.54030], atol=1e-5)


def test_time_encode_formula():
    spec = TimeEncodingSpec(dim=6, t_ref=100, scale=10.0, base_period=50.0)
    t = 1234
    u = (t - 100) / 10.0
    want = []
    for i in range(3):
        w = u / 50.0 ** (2 * i / 6)
        want += [math.sin(w), math.cos(w)]
    np.testing.assert_allclose(time_encode(t, spec), want, atol=1e-12)


def _nn_agrees(u, spec):
    X = np.array([time_encode(int(round(x * spec.scale)), spec) for x in u])
    D = ((X[:, None] - X[None]) ** 2).sum(-1)
    np.fill_diagonal(D, np.inf)
    T = np.abs(u[:, None] - u[None])
    np.fill_diagonal(T, np.inf)
    nn = D.argmin(1)
    return all(T[i, nn[i]] <= T[i].min() * (1 + 1e-9) for i in range(len(u)))


@pytest.mark.parametrize("span", [2 * math.pi, 10.0, 100.0])
def test_time_nearest_neighbour_on_grid(span):
    # grids finer than the fastest component's half period
    spec = TimeEncodingSpec(t_ref=0)
    assert _nn_agrees(np.linspace(0, span, 100, endpoint=False), spec)


def test_time_encode_injective_over_base_period():
    spec = TimeEncodingSpec(t_ref=0)
    u = np.linspace(0, spec.base_period, 100, endpoint=False)
    X = np.array([time_encode(int(round(x * spec.scale)), spec) for x in u])
    D = ((X[:, None] - X[None]) ** 2).sum(-1) + np.eye(100)
    assert D.min() > 1e-6


def test_event_feature_layout():
    espec, tspec = TextEmbedderSpec(), TimeEncodingSpec(t_ref=10)
    v = event_feature("disk full", 99, tspec, espec)
    assert v.shape == (400,)
    np.testing.assert_array_equal(v[:384], hash_embed("disk full", espec))
    np.testing.assert_array_equal(v[384:], time_encode(99, tspec))
    assert EventFeaturizer(espec, tspec).dim == 400


def test_featurizer_matches_event_feature():
    fz = EventFeaturizer(tspec=TimeEncodingSpec(t_ref=3))
    np.testing.assert_array_equal(fz("x y", 77), event_feature("x y", 77, fz.tspec, fz.espec))
    assert fz.many([]).shape == (0, 400)


def test_coming_anchor_uses_now_for_every_event():
    fz = EventFeaturizer(tspec=TimeEncodingSpec(t_ref=0))
    at = fz.at(5000)
    a, b = at("old", 10), at("old", 4000)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a[384:], time_encode(5000, fz.tspec))
    np.testing.assert_array_equal(a[:384], hash_embed("old", fz.espec))


def test_event_anchor_keeps_own_time():
    fz = EventFeaturizer(tspec=TimeEncodingSpec(t_ref=0, anchor="event"))
    assert fz.at(5000) is fz
    assert not np.array_equal(fz.at(5000)("e", 10), fz.at(5000)("e", 4000 * 86400))


@pytest.mark.parametrize("kw", [{"dim": 3}, {"dim": 0}, {"base_period": 0}, {"scale": -1}, {"anchor": "later"}])
def test_bad_time_specs(kw):
    with pytest.raises(ValueError):
        TimeEncodingSpec(**kw)


def test_spec_dict_round_trip():
    t = TimeEncodingSpec(dim=8, t_ref=12, anchor="event")
    assert TimeEncodingSpec.from_dict(t.to_dict()) == t
    e = TextEmbedderSpec(dim=64)
    assert TextEmbedderSpec.from_dict(e.to_dict()) == e
