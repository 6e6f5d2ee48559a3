"""``gldb`` command line: train, detect, inject, generate, eval, gradcheck.

Every command writes a run manifest next to its main output. Its ``hash``
covers the resolved configuration, input and output digests and the tool
version (but not wall-clock), so two runs with the same seed compare equal.
Exit codes: 0 ok, 2 usage, 3 data or checkpoint error, 4 internal invariant.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .embedding import TimeEncodingSpec, parse_embedder_arg
from .errors import GLDBError, InvariantViolation
from .evalkit.experiment import evaluate, score_histogram, write_histogram_csv
from .evalkit.inject import InjectionConfig, InjectionKind, inject
from .evalkit.synthetic import SyntheticLogConfig, generate_synthetic, synthetic_schema
from .logmodel import parse_schema, read_log, schema_from_dict, split_train_test, write_log, write_schema
from .neural.gradcheck import grad_check
from .neural.model import Fusion, ModelConfig
from .pipeline import TrainConfig, detect_online, load_checkpoint, read_verdicts, save_checkpoint, train_online, write_verdicts

log = logging.getLogger("gldb")

DEFAULTS = {
    "train_frac": 0.9,
    "epochs": TrainConfig.epochs,
    "lr": TrainConfig.lr,
    "neg_ratio": TrainConfig.rho,
    "window": TrainConfig.window,
    "tau": TrainConfig.tau,
    "seed": 0,
    "embedder": "hash",
    "fusion": Fusion.GATED.value,
    "model": "gnn",
    "rate": 0.05,
    "kind": InjectionKind.OBJECT_SWAP.value,
    "n_normal": 50,
    "aggregation": TrainConfig.aggregation,
}
# model-shape keys accepted only through --config
MODEL_KEYS = ("d_obj", "d_hidden", "n_layers", "n_heads", "leaky_slope", "init_scale")
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve(args, keys) -> dict:
    """Explicit flags override --config values, which override defaults."""
    conf = {}
    if getattr(args, "config", None):
        conf = json.loads(Path(args.config).read_text())
        if not isinstance(conf, dict):
            raise UsageError("--config must hold a JSON object")
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        out[k] = v if v is not None else conf.get(k, DEFAULTS.get(k))
    for k in MODEL_KEYS:
        if k in conf:
            out[k] = conf[k]
    return out


def write_manifest(path, command: str, config: dict, inputs: list, outputs: list, started: float) -> dict:
    body = {
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "inputs": {str(p): sha256_file(p) for p in inputs if p and Path(p).exists()},
        "outputs": {str(p): sha256_file(p) for p in outputs if p and Path(p).exists()},
        "version": __version__,
    }
    body["hash"] = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
    body["wall_clock"] = {"started": started, "seconds": time.time() - started}
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    log.info("manifest %s (hash %s)", path, body["hash"][:12])
    return body


def _model_config(conf: dict) -> ModelConfig:
    kw = {k: conf[k] for k in MODEL_KEYS if k in conf}
    return ModelConfig(fusion=Fusion(conf["fusion"]), **kw)


def _train_config(conf: dict) -> TrainConfig:
    return TrainConfig(
        rho=conf["neg_ratio"],
        lr=conf["lr"],
        epochs=conf["epochs"],
        window=conf["window"],
        seed=conf["seed"],
        tau=conf["tau"],
        aggregation=conf["aggregation"],
    )


def cmd_train(args) -> int:
    started = time.time()
    conf = resolve(args, ["train_frac", "epochs", "lr", "neg_ratio", "window", "tau", "seed", "embedder", "fusion", "model", "aggregation"])
    schema = parse_schema(args.schema)
    entries = read_log(args.input, schema)
    train, _ = split_train_test(entries, conf["train_frac"]) if conf["train_frac"] < 1 else (entries, [])
    ckpt = train_online(
        train,
        _model_config(conf),
        _train_config(conf),
        text_spec=parse_embedder_arg(conf["embedder"]),
        time_spec=TimeEncodingSpec(),
        schema=schema,
        kind=conf["model"],
    )
    save_checkpoint(args.out, ckpt)
    log.info("trained on %d entries; epoch losses %s", len(train), [round(x, 5) for x in ckpt.epoch_losses])
    write_manifest(
        args.out + ".manifest.json", "train", conf, [args.input, args.schema], [args.out, args.out + ".json"], started
    )
    return 0


def cmd_detect(args) -> int:
    started = time.time()
    conf = resolve(args, ["train_frac", "tau"])
    if args.tau is None:
        conf["tau"] = None  # fall back to the checkpoint's threshold
    schema = parse_schema(args.schema) if args.schema else None
    ckpt = load_checkpoint(args.checkpoint, schema)
    if schema is None:
        if ckpt.schema is None:
            raise UsageError("checkpoint carries no schema; pass --schema")
        schema = schema_from_dict(ckpt.schema)
    entries = read_log(args.input, schema)
    frac = args.train_frac if args.train_frac is not None else 0.0
    test = split_train_test(entries, frac)[1] if frac > 0 else entries
    verdicts, graph = detect_online(test, ckpt, tau=conf["tau"])
    write_verdicts(verdicts, args.out)
    snapshot = args.snapshot or args.out + ".graph.json"
    Path(snapshot).write_text(json.dumps(graph.to_snapshot(), sort_keys=True, separators=(",", ":")) + "\n")
    flagged = sum(v.event_anomaly == 1 for v in verdicts)
    links = sum(lp.anomaly_flag for v in verdicts for lp in v.link_predictions)
    log.info("%d entries scored; %d events and %d links flagged", len(verdicts), flagged, links)
    conf = {**conf, "tau": conf["tau"] if conf["tau"] is not None else ckpt.train_config.tau, "train_frac": frac}
    write_manifest(args.out + ".manifest.json", "detect", conf, [args.input, args.checkpoint], [args.out, snapshot], started)
    return 0


def cmd_inject(args) -> int:
    started = time.time()
    conf = resolve(args, ["rate", "kind", "seed", "train_frac"])
    schema = parse_schema(args.schema)
    entries = read_log(args.input, schema)
    start = len(split_train_test(entries, conf["train_frac"])[0]) if conf["train_frac"] > 0 else 0
    out = inject(entries, InjectionConfig(conf["rate"], InjectionKind(conf["kind"]), conf["seed"]), start=start)
    write_log(out, schema, args.out)
    n_bad = sum(1 for e in out[start:] if e.label is not None and e.label.is_anomalous)
    log.info("perturbed %d of %d test entries", n_bad, len(out) - start)
    write_manifest(args.out + ".manifest.json", "inject", conf, [args.input, args.schema], [args.out], started)
    return 0


def cmd_generate(args) -> int:
    started = time.time()
    conf = resolve(args, ["seed"])
    extra = {}
    if args.config:
        extra = {k: v for k, v in json.loads(Path(args.config).read_text()).items() if k in SyntheticLogConfig.__dataclass_fields__}
    if "objects_per_entry" in extra:
        extra["objects_per_entry"] = tuple(extra["objects_per_entry"])
    cfg = SyntheticLogConfig(**{**extra, "seed": conf["seed"]})
    if args.entries is not None:
        cfg = replace(cfg, n_entries=args.entries)
    schema = synthetic_schema()
    schema_path = args.schema or args.out + ".schema.json"
    write_log(generate_synthetic(cfg), schema, args.out)
    write_schema(schema, schema_path)
    log.info("wrote %d entries to %s", cfg.n_entries, args.out)
    write_manifest(args.out + ".manifest.json", "generate", {**conf, "synthetic": cfg.to_dict()}, [], [args.out, schema_path], started)
    return 0


def cmd_eval(args) -> int:
    started = time.time()
    conf = resolve(args, ["kind", "n_normal", "seed"])
    schema = parse_schema(args.schema)
    entries = {e.index: e for e in read_log(args.input, schema)}
    verdicts = read_verdicts(args.verdicts)
    missing = [v.entry_index for v in verdicts if v.entry_index not in entries]
    if missing:
        raise UsageError(f"verdicts reference entries absent from --input: {missing[:5]}")
    test = [entries[v.entry_index] for v in verdicts]
    kind = InjectionKind(conf["kind"])
    metrics, subset, corr = evaluate(verdicts, test, kind, conf["n_normal"], conf["seed"])
    report = {"metrics": metrics.to_dict(), "correlation": corr, "config_echo": conf}
    print(f"{'metric':<12}{'value':>10}")
    for k in ("accuracy", "precision", "recall", "f1"):
        print(f"{k:<12}{getattr(metrics, k):>10.4f}")
    print(f"{'subset':<12}{metrics.subset_size:>10d}")
    print(f"TP={metrics.tp} FP={metrics.fp} TN={metrics.tn} FN={metrics.fn}  correlation={corr}")
    outputs = []
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        outputs.append(args.out)
        hist = args.out + ".hist.csv"
        write_histogram_csv(score_histogram(verdicts, test), hist)
        outputs.append(hist)
        write_manifest(args.out + ".manifest.json", "eval", conf, [args.input, args.verdicts], outputs, started)
    return 0


def cmd_gradcheck(args) -> int:
    started = time.time()
    conf = resolve(args, ["seed", "fusion"])
    report = grad_check(_model_config(conf), seed=conf["seed"])
    print(f"max relative error {report.max_rel_err:.3e} over {report.n_coords} coordinates (seed {report.seed})")
    for name, row in sorted(report.per_param.items()):
        print(f"  {name:<14}{row['max_rel_err']:.3e}  ({row['n_coords']} coords)")
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        write_manifest(args.out + ".manifest.json", "gradcheck", conf, [], [args.out], started)
    return 0 if report.max_rel_err < 1e-3 else 4


def _d(key) -> str:
    return f"(default: {DEFAULTS[key]})"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gldb", description="Graph-based online anomaly detection for tabular logs.")
    ap.add_argument("--version", action="version", version=f"gldb {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="JSON file of defaults; explicit flags win (default: none)")
        if seed:
            p.add_argument("--seed", type=int, help=f"random seed {_d('seed')}")

    p = sub.add_parser("train", help="online training on the first part of a log")
    p.add_argument("--input", required=True, help="CSV or JSONL log")
    p.add_argument("--schema", required=True, help="schema JSON")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--train-frac", type=float, help=f"chronological training fraction {_d('train_frac')}")
    p.add_argument("--epochs", type=int, help=f"passes over the training split {_d('epochs')}")
    p.add_argument("--lr", type=float, help=f"Adam learning rate {_d('lr')}")
    p.add_argument("--neg-ratio", type=int, help=f"negatives per positive link {_d('neg_ratio')}")
    p.add_argument("--window", type=int, help=f"entries visible to message passing {_d('window')}")
    p.add_argument("--tau", type=float, help=f"link acceptance threshold stored in the checkpoint {_d('tau')}")
    p.add_argument("--embedder", help=f"hash or precomputed:<table.jsonl> {_d('embedder')}")
    p.add_argument("--fusion", choices=[f.value for f in Fusion], help=f"{_d('fusion')}")
    p.add_argument("--model", choices=["gnn", "mlp"], help=f"graph model or MLP baseline {_d('model')}")
    p.add_argument("--aggregation", choices=["mean", "min"], help=f"link-to-event score reduction {_d('aggregation')}")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="online detection from a checkpoint")
    p.add_argument("--input", required=True, help="CSV or JSONL log")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="verdict JSONL path")
    p.add_argument("--schema", help="schema JSON (default: the one stored in the checkpoint)")
    p.add_argument("--train-frac", type=float, help="skip this leading fraction of the input (default: 0, score everything)")
    p.add_argument("--tau", type=float, help="threshold override (default: checkpoint value)")
    p.add_argument("--snapshot", help="graph snapshot path (default: <out>.graph.json)")
    common(p, seed=False)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("inject", help="swap objects or events into the test split")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True, help="labelled log path (.jsonl or .csv)")
    p.add_argument("--rate", type=float, help=f"fraction of test entries perturbed {_d('rate')}")
    p.add_argument("--kind", choices=[k.value for k in InjectionKind], help=f"{_d('kind')}")
    p.add_argument("--train-frac", type=float, help=f"entries before this fraction are history only {_d('train_frac')}")
    common(p)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("generate", help="write a community-structured synthetic log")
    p.add_argument("--out", required=True, help="log path (.jsonl or .csv)")
    p.add_argument("--schema", help="where to write the schema (default: <out>.schema.json)")
    p.add_argument("--entries", type=int, help=f"number of entries (default: {SyntheticLogConfig.n_entries})")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="metrics of a verdict stream against labels")
    p.add_argument("--input", required=True, help="labelled log the verdicts were produced from")
    p.add_argument("--schema", required=True)
    p.add_argument("--verdicts", required=True)
    p.add_argument("--kind", choices=[k.value for k in InjectionKind], help=f"which labels to score {_d('kind')}")
    p.add_argument("--n-normal", type=int, help=f"normal entries added to the subset {_d('n_normal')}")
    p.add_argument("--out", help="report JSON path (default: print only)")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    p.add_argument("--fusion", choices=[f.value for f in Fusion], help=f"{_d('fusion')}")
    p.add_argument("--out", help="report JSON path (default: print only)")
    common(p)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("GLDB_LOG_LEVEL", "info").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except GLDBError as exc:
        print(f"gldb: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"gldb: error: {exc}", file=sys.stderr)
        return 2
    except (InvariantViolation, AssertionError) as exc:
        print(f"gldb: internal invariant violated: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"gldb: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
