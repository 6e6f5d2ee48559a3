"""Online training (negative sampling over the training split) and online
detection with accepted-link graph updates, plus warm-start checkpoints."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import container
from .embedding import EventFeaturizer, TextEmbedderSpec, TimeEncodingSpec
from .errors import CheckpointIncompatible, EmptyTrainSet
from .graph import (
    DynamicGraph,
    EntrySubgraph,
    NodeRef,
    build_subgraph,
    commit_entry,
    count_non_edges,
    enumerate_non_edges,
    merge_objects,
    window_view,
)
from .logmodel import LogEntry, LogSchema
from .neural.baseline import MLPLinkModel, init_mlp_params
from .neural.model import GraphLinkModel, ModelConfig, grow_object_table, init_params
from .neural.optim import AdamState, adam_step

log = logging.getLogger(__name__)

MODEL_KINDS = {"gnn": (GraphLinkModel, init_params), "mlp": (MLPLinkModel, init_mlp_params)}


@dataclass(frozen=True)
class TrainConfig:
    rho: int = 10
    lr: float = 1e-4
    epochs: int = 10
    window: int = 100
    seed: int = 0
    tau: float = 0.5
    aggregation: str = "mean"  # or "min": how link scores reduce to an event score

    def __post_init__(self):
        if self.rho < 1:
            raise ValueError("rho must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.aggregation not in ("mean", "min"):
            raise ValueError("aggregation must be mean or min")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LinkPrediction:
    object: str
    event_entry: int
    score: float
    predicted_label: int  # 1 = accepted (normal) link

    @property
    def anomaly_flag(self) -> int:
        return 1 - self.predicted_label


@dataclass(frozen=True)
class EntryVerdict:
    entry_index: int
    link_predictions: tuple[LinkPrediction, ...]
    event_score: float | None
    event_anomaly: int | None  # None: entry had no links ("no evidence")

    @property
    def object_anomalies(self) -> dict[str, int]:
        return {lp.object: lp.anomaly_flag for lp in self.link_predictions}

    def to_json(self) -> dict:
        return {
            "n": self.entry_index,
            "event_score": self.event_score,
            "event_anomaly": self.event_anomaly,
            "links": [{"object": lp.object, "score": lp.score, "anomaly": lp.anomaly_flag} for lp in self.link_predictions],
        }

    @classmethod
    def from_json(cls, d: dict) -> EntryVerdict:
        links = tuple(LinkPrediction(l["object"], d["n"], float(l["score"]), 1 - int(l["anomaly"])) for l in d["links"])
        return cls(int(d["n"]), links, d["event_score"], d["event_anomaly"])


def write_verdicts(verdicts: Sequence[EntryVerdict], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for v in verdicts:
            fh.write(json.dumps(v.to_json()) + "\n")


def read_verdicts(path) -> list[EntryVerdict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [EntryVerdict.from_json(json.loads(line)) for line in fh if line.strip()]


@dataclass
class Checkpoint:
    kind: str
    model_config: ModelConfig
    params: dict[str, np.ndarray]
    adam: AdamState
    train_config: TrainConfig
    text_spec: TextEmbedderSpec
    time_spec: TimeEncodingSpec
    graph: DynamicGraph
    rng_state: dict
    last_entry_index: int
    last_timestamp: int
    schema: dict | None = None
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def schema_hash(self) -> str | None:
        if self.schema is None:
            return None
        return _schema_obj(self.schema).hash()

    def model(self, params: dict | None = None):
        cls, _ = MODEL_KINDS[self.kind]
        return cls(self.model_config, self.params if params is None else params)

    def featurizer(self) -> EventFeaturizer:
        return EventFeaturizer(self.text_spec, self.time_spec)

    def config_dict(self) -> dict:
        return {
            "kind": self.kind,
            "model_config": self.model_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "text_embedder": self.text_spec.to_dict(),
            "time_encoding": self.time_spec.to_dict(),
            "schema": self.schema,
            "schema_hash": self.schema_hash,
        }

    def header(self) -> dict:
        return {
            **self.config_dict(),
            "adam": {"step": self.adam.step, "beta1": self.adam.beta1, "beta2": self.adam.beta2, "eps": self.adam.eps},
            "rng_state": self.rng_state,
            "last_entry_index": self.last_entry_index,
            "last_timestamp": self.last_timestamp,
            "epoch_losses": self.epoch_losses,
            "graph": self.graph.to_snapshot(),
        }

    def tensors(self) -> dict[str, np.ndarray]:
        out = {f"param.{k}": v for k, v in self.params.items()}
        for k in self.adam.m:
            out[f"adam.m.{k}"] = self.adam.m[k]
            out[f"adam.v.{k}"] = self.adam.v[k]
        return out

    def to_bytes(self) -> bytes:
        return container.encode(self.header(), self.tensors())

    @classmethod
    def from_parts(cls, header: dict, tensors: dict[str, np.ndarray]) -> Checkpoint:
        params = {k[len("param.") :]: v for k, v in tensors.items() if k.startswith("param.")}
        a = header["adam"]
        adam = AdamState(beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], step=a["step"])
        for k, v in tensors.items():
            if k.startswith("adam.m."):
                adam.m[k[len("adam.m.") :]] = v
            elif k.startswith("adam.v."):
                adam.v[k[len("adam.v.") :]] = v
        return cls(
            kind=header["kind"],
            model_config=ModelConfig.from_dict(header["model_config"]),
            params=params,
            adam=adam,
            train_config=TrainConfig(**header["train_config"]),
            text_spec=TextEmbedderSpec.from_dict(header["text_embedder"]),
            time_spec=TimeEncodingSpec.from_dict(header["time_encoding"]),
            graph=DynamicGraph.from_snapshot(header["graph"]),
            rng_state=header["rng_state"],
            last_entry_index=header["last_entry_index"],
            last_timestamp=header["last_timestamp"],
            schema=header["schema"],
            epoch_losses=list(header["epoch_losses"]),
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> Checkpoint:
        return cls.from_parts(*container.decode(blob))


def _schema_obj(d: dict) -> LogSchema:
    from .logmodel import schema_from_dict

    return schema_from_dict(d)


def save_checkpoint(path, ckpt: Checkpoint) -> bytes:
    return container.write(path, ckpt.header(), ckpt.tensors(), sidecar=ckpt.config_dict())


def load_checkpoint(path, schema: LogSchema | None = None) -> Checkpoint:
    try:
        ckpt = Checkpoint.from_parts(*container.read(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointIncompatible(f"{path}: malformed checkpoint ({exc})") from exc
    if schema is not None and ckpt.schema_hash is not None and schema.hash() != ckpt.schema_hash:
        raise CheckpointIncompatible("log schema does not match the schema the checkpoint was trained on")
    return ckpt


def params_checksum(params: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for k in sorted(params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(params[k]).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------


def _rng_from_state(state: dict) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


def _candidate_pairs(sub: EntrySubgraph, negatives, featurizer, graph: DynamicGraph):
    """Index a positive+negative pair list into (query objects, candidate events)."""
    pairs = [(o.id, sub.event.id) for o in sub.objects] + [(o.id, e.id) for o, e in negatives]
    labels = [1.0] * len(sub.objects) + [0.0] * len(negatives)
    q_index: dict[int, int] = {}
    c_index: dict[int, int] = {sub.event.id: 0}
    feats = [featurizer(sub.text, sub.timestamp)]
    pair_q, pair_c = [], []
    for o, e in pairs:
        pair_q.append(q_index.setdefault(o, len(q_index)))
        if e not in c_index:
            c_index[e] = len(c_index)
            meta = graph.events[e]
            feats.append(featurizer(meta.text, meta.timestamp))
        pair_c.append(c_index[e])
    return list(q_index), np.vstack(feats), pair_q, pair_c, labels


def train_online(
    train_log: Sequence[LogEntry],
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    text_spec: TextEmbedderSpec | None = None,
    time_spec: TimeEncodingSpec | None = None,
    schema: LogSchema | None = None,
    kind: str = "gnn",
    trace: list | None = None,
) -> Checkpoint:
    """Online training over a chronological log; returns the warm-start checkpoint.

    Every entry is one step: merge its objects, take its star as positives,
    sample ``rho`` times as many unconnected pairs as negatives, take one Adam
    step on the balanced BCE, then commit the event. Later epochs replay the
    entries against windows rewound to each entry's original position.
    """
    if not train_log:
        raise EmptyTrainSet("no training entries")
    tc = train_config or TrainConfig()
    text_spec = text_spec or TextEmbedderSpec()
    time_spec = replace(time_spec or TimeEncodingSpec(), t_ref=train_log[0].timestamp)
    featurizer = EventFeaturizer(text_spec, time_spec)
    mc = replace(model_config or ModelConfig(), d_event_in=featurizer.dim)
    rng = np.random.default_rng(tc.seed)
    model_cls, init = MODEL_KINDS[kind]
    params = init(mc, rng)
    model = model_cls(mc, params)
    adam = AdamState()
    graph = DynamicGraph()
    record = trace.append if trace is not None else (lambda ev: None)
    epoch_losses = []

    for epoch in range(tc.epochs):
        losses = []
        for entry in train_log:
            if epoch == 0:
                sub = build_subgraph(entry, graph)
                n_new = merge_objects(graph, sub)
                grow_object_table(params, graph.num_objects, rng, mc.init_scale)
                record(("merge_objects", entry.index, n_new))
                view = window_view(graph, tc.window)
            else:
                sub = graph.subgraph_of(entry.index)
                view = window_view(graph, tc.window, asof_event=sub.event.id)
            n_neg = min(tc.rho * len(sub.objects), count_non_edges(view, sub))
            negatives = enumerate_non_edges(graph, view, rng, n_neg, pending=sub)
            record(("sample", entry.index, len(sub.objects), len(negatives)))
            if sub.objects:
                fz = featurizer.at(sub.timestamp)
                query, cand, pair_q, pair_c, labels = _candidate_pairs(sub, negatives, fz, graph)
                batch = model.prepare(view, query, cand, pair_q, pair_c, fz, labels)
                loss, _, grads = model.loss_and_grads(batch)
                adam_step(params, grads, adam, tc.lr)
                losses.append(loss)
                record(("step", entry.index, adam.step))
            if epoch == 0:
                commit_entry(graph, sub)
                record(("commit", entry.index, graph.num_events, graph.num_edges))
        epoch_losses.append(float(np.mean(losses)) if losses else float("nan"))
        log.info("epoch %d/%d mean loss %.5f", epoch + 1, tc.epochs, epoch_losses[-1])

    if tc.epochs == 0:
        # untrained model: still build the graph so detection has context
        for entry in train_log:
            sub = build_subgraph(entry, graph)
            merge_objects(graph, sub)
            grow_object_table(params, graph.num_objects, rng, mc.init_scale)
            commit_entry(graph, sub)

    return Checkpoint(
        kind=kind,
        model_config=mc,
        params=params,
        adam=adam,
        train_config=tc,
        text_spec=text_spec,
        time_spec=time_spec,
        graph=graph,
        rng_state=rng.bit_generator.state,
        last_entry_index=train_log[-1].index,
        last_timestamp=train_log[-1].timestamp,
        schema=None if schema is None else schema.to_dict(),
        epoch_losses=epoch_losses,
    )


def _event_score(scores: list[float], aggregation: str) -> float:
    return float(np.mean(scores)) if aggregation == "mean" else float(np.min(scores))


def detect_online(
    test_log: Sequence[LogEntry],
    ckpt: Checkpoint,
    tau: float | None = None,
    trace: list | None = None,
    scorer: Callable | None = None,
):
    """Score every observed link of each incoming entry and grow the graph
    with the accepted ones only. Parameters are never updated.

    ``scorer(model, batch) -> scores`` overrides the model forward (used in
    tests to inject crafted scores). Returns ``(verdicts, graph)``.
    """
    tc = ckpt.train_config
    tau = tc.tau if tau is None else tau
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    graph = copy.deepcopy(ckpt.graph)
    params = dict(ckpt.params)
    params["object_table"] = ckpt.params["object_table"].copy()
    model = ckpt.model(params)
    featurizer = ckpt.featurizer()
    rng = _rng_from_state(ckpt.rng_state)
    record = trace.append if trace is not None else (lambda ev: None)
    if test_log and test_log[0].timestamp < ckpt.last_timestamp:
        log.warning("test log starts before the checkpoint's last timestamp")

    verdicts = []
    stream_index = ckpt.last_entry_index
    for entry in test_log:
        stream_index = max(entry.index, stream_index + 1)
        sub = build_subgraph(replace(entry, index=stream_index), graph)
        merge_objects(graph, sub)
        grow_object_table(params, graph.num_objects, rng, ckpt.model_config.init_scale)
        if not sub.objects:
            verdicts.append(EntryVerdict(entry.index, (), None, None))
            record(("commit", entry.index, 0))
            continue
        view = window_view(graph, tc.window)
        fz = featurizer.at(sub.timestamp)
        cand = fz(sub.text, sub.timestamp)[None]
        n = len(sub.objects)
        batch = model.prepare(view, [o.id for o in sub.objects], cand, list(range(n)), [0] * n, fz)
        scores = scorer(model, batch) if scorer is not None else model.forward(batch)[0]
        scores = [float(s) for s in scores]
        links = tuple(
            LinkPrediction(key, entry.index, s, int(s >= tau)) for key, s in zip(sub.object_keys, scores)
        )
        accepted = [ref for ref, lp in zip(sub.objects, links) if lp.predicted_label]
        inserted = commit_entry(graph, sub, accepted)
        record(("commit", entry.index, len(accepted) if inserted else 0))
        ev_score = _event_score(scores, tc.aggregation)
        verdicts.append(EntryVerdict(entry.index, links, ev_score, int(ev_score < tau)))
    return verdicts, graph
