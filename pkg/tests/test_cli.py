import json
import subprocess
import sys

import pytest

from gldb import cli
from gldb.errors import InvariantViolation
from gldb.pipeline import read_verdicts

SMALL = {"d_obj": 16, "d_hidden": 16, "epochs": 1, "lr": 0.001}


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "small.json").write_text(json.dumps(SMALL))
    assert run("generate", "--out", d / "log.jsonl", "--entries", 300, "--seed", 1) == 0
    assert run("inject", "--input", d / "log.jsonl", "--schema", d / "log.jsonl.schema.json", "--out", d / "inj.jsonl", "--seed", 1) == 0
    s = d / "log.jsonl.schema.json"
    assert run("train", "--input", d / "inj.jsonl", "--schema", s, "--out", d / "ck.gldb", "--config", d / "small.json", "--seed", 7) == 0
    return d


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit) as e:
        run("train", "--help")
    assert e.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    for flag, default in [
        ("--epochs", "10"),
        ("--neg-ratio", "10"),
        ("--lr", "0.0001"),
        ("--window", "100"),
        ("--tau", "0.5"),
        ("--train-frac", "0.9"),
        ("--seed", "0"),
        ("--embedder", "hash"),
        ("--fusion", "gated"),
    ]:
        assert flag in text and f"(default: {default})" in text.split(flag, 2)[-1], flag


def test_every_optional_flag_states_its_default():
    parser = cli.build_parser()
    subs = next(a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction")
    for name, sp in subs.choices.items():
        for act in sp._actions:
            if act.required or not act.option_strings or act.dest in ("help",):
                continue
            assert "default" in (act.help or ""), (name, act.option_strings)


def test_missing_schema_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as e:
        run("train", "--input", tmp_path / "x.jsonl", "--out", tmp_path / "c")
    assert e.value.code == 2


def test_train_outputs(work):
    assert (work / "ck.gldb").exists() and (work / "ck.gldb.json").exists()
    m = json.loads((work / "ck.gldb.manifest.json").read_text())
    assert m["command"] == "train" and m["seed"] == 7
    assert m["config"]["epochs"] == 1 and m["config"]["d_obj"] == 16  # --config merged
    assert m["config"]["window"] == 100  # default materialised


def test_detect_and_eval(work, capsys):
    s = work / "log.jsonl.schema.json"
    assert run("detect", "--input", work / "inj.jsonl", "--checkpoint", work / "ck.gldb", "--out", work / "v.jsonl", "--train-frac", 0.9) == 0
    verdicts = read_verdicts(work / "v.jsonl")
    assert len(verdicts) == 30
    assert (work / "v.jsonl.graph.json").exists()
    assert run("eval", "--input", work / "inj.jsonl", "--schema", s, "--verdicts", work / "v.jsonl", "--n-normal", 20, "--out", work / "r.json") == 0
    report = json.loads((work / "r.json").read_text())
    assert report["metrics"]["subset_size"] == 2 + 20
    assert "f1" in capsys.readouterr().out.lower()


def test_tau_monotonicity(work):
    counts = {}
    for tau in (0.1, 0.9):
        out = work / f"v{tau}.jsonl"
        assert run("detect", "--input", work / "inj.jsonl", "--checkpoint", work / "ck.gldb", "--out", out, "--tau", tau) == 0
        counts[tau] = sum(lp.anomaly_flag for v in read_verdicts(out) for lp in v.link_predictions)
    assert counts[0.1] <= counts[0.9]


def test_corrupt_checkpoint_exit_3(work, tmp_path, capsys):
    bad = tmp_path / "bad.gldb"
    bad.write_bytes((work / "ck.gldb").read_bytes()[:-10])
    assert run("detect", "--input", work / "inj.jsonl", "--checkpoint", bad, "--out", tmp_path / "v.jsonl") == 3
    assert "CorruptChecksum" in capsys.readouterr().err


def test_schema_mismatch_exit_3(work, tmp_path):
    doc = json.loads((work / "log.jsonl.schema.json").read_text())
    doc["object_delimiter"] = "|"
    (tmp_path / "s.json").write_text(json.dumps(doc))
    rc = run("detect", "--input", work / "inj.jsonl", "--schema", tmp_path / "s.json", "--checkpoint", work / "ck.gldb", "--out", tmp_path / "v.jsonl")
    assert rc == 3


def test_bad_value_exit_2(work, tmp_path):
    rc = run("detect", "--input", work / "inj.jsonl", "--checkpoint", work / "ck.gldb", "--out", tmp_path / "v.jsonl", "--tau", 1.5)
    assert rc == 2


def test_internal_invariant_exit_4(monkeypatch, tmp_path):
    def boom(*a, **k):
        raise InvariantViolation("broken")

    monkeypatch.setattr(cli, "grad_check", boom)
    assert run("gradcheck", "--seed", 0) == 4


def test_gradcheck_exit_0(tmp_path):
    assert run("gradcheck", "--seed", 0, "--out", tmp_path / "g.json") == 0
    assert json.loads((tmp_path / "g.json").read_text())["max_rel_err"] < 1e-3


def test_same_seed_gives_same_checkpoint_digest(work, tmp_path):
    s = work / "log.jsonl.schema.json"
    hashes = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.gldb"
        assert run("train", "--input", work / "inj.jsonl", "--schema", s, "--out", out, "--config", work / "small.json", "--seed", 7) == 0
        m = json.loads((tmp_path / f"{name}.gldb.manifest.json").read_text())
        hashes.append((m["hash"], m["outputs"][str(out)]))
    # output paths differ, so compare the checkpoint digests and the config
    assert hashes[0][1] == hashes[1][1] == json.loads((work / "ck.gldb.manifest.json").read_text())["outputs"][str(work / "ck.gldb")]


def test_manifest_hash_equal_for_same_paths(tmp_path):
    ms = []
    for _ in range(2):
        assert run("generate", "--out", tmp_path / "g.jsonl", "--entries", 50, "--seed", 3) == 0
        ms.append(json.loads((tmp_path / "g.jsonl.manifest.json").read_text()))
    assert ms[0]["hash"] == ms[1]["hash"]


def test_console_script_runs():
    r = subprocess.run([sys.executable, "-m", "gldb.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
