"""Heterogeneous node embedder, GAT backbone, gated fusion and link head.

The training path works on a :class:`GraphBatch`: the k-hop neighbourhood of
the queried objects inside the window, with nodes ordered by hop distance so
layer ``l`` only has to update a prefix of the rows. For a query object the
result equals running every layer over the whole window.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DimensionMismatch, EmptyBatch, MissingRow
from ..graph import NodeRef, WindowView, khop_layers
from .layers import gat_bwd, gat_fwd, mlp_bwd, mlp_fwd, sigmoid

LOG_CLAMP = 1e-12


class Fusion(str, enum.Enum):
    PLAIN = "plain"
    GATED = "gated"


class Reduce(str, enum.Enum):
    DIFFERENCE = "difference"
    CONCAT = "concat"
    HADAMARD = "hadamard"


@dataclass(frozen=True)
class ModelConfig:
    d_obj: int = 512
    d_hidden: int = 512
    n_layers: int = 3
    n_heads: int = 4
    fusion: Fusion = Fusion.GATED
    leaky_slope: float = 0.2
    init_scale: float = 0.1
    reduce: Reduce = Reduce.DIFFERENCE
    d_event_in: int = 400

    def __post_init__(self):
        if self.d_hidden % self.n_heads:
            raise ValueError("d_hidden must be divisible by n_heads")
        if self.n_layers < 1:
            raise ValueError("need at least one GAT layer")
        object.__setattr__(self, "fusion", Fusion(self.fusion))
        object.__setattr__(self, "reduce", Reduce(self.reduce))

    @property
    def head_dim(self) -> int:
        return self.d_hidden // self.n_heads

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fusion"] = self.fusion.value
        d["reduce"] = self.reduce.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        return cls(**d)


@dataclass
class RowGrad:
    """Gradient for a subset of rows of a row-indexed table."""

    rows: np.ndarray
    values: np.ndarray


def _he_normal(rng, fan_in, fan_out, shape=None):
    # fan-in scaling for ELU layers; with Glorot the head starts almost linear
    # and cannot express an object/event match until its weights grow
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape or (fan_in, fan_out))


def init_params(config: ModelConfig, rng: np.random.Generator, n_objects: int = 0) -> dict[str, np.ndarray]:
    d, dh = config.d_hidden, config.head_dim
    p = {"object_table": rng.normal(0.0, config.init_scale, size=(n_objects, config.d_obj))}
    for name, d_in in (("obj", config.d_obj), ("evt", config.d_event_in)):
        p[f"{name}_w1"] = _he_normal(rng, d_in, d)
        p[f"{name}_b1"] = np.zeros(d)
        p[f"{name}_w2"] = _he_normal(rng, d, d)
        p[f"{name}_b2"] = np.zeros(d)
    for l in range(config.n_layers):
        p[f"gat{l}_w"] = _he_normal(rng, d, d)
        p[f"gat{l}_asrc"] = _he_normal(rng, 2 * dh, 1, (config.n_heads, dh))
        p[f"gat{l}_adst"] = _he_normal(rng, 2 * dh, 1, (config.n_heads, dh))
    p["alpha"] = np.zeros(1)
    head_in = 2 * d if config.reduce is Reduce.CONCAT else d
    p["head_w1"] = _he_normal(rng, head_in, d)
    p["head_b1"] = np.zeros(d)
    p["head_w2"] = _he_normal(rng, d, 1)
    p["head_b2"] = np.zeros(1)
    return p


def grow_object_table(params: dict, n_objects: int, rng: np.random.Generator, init_scale: float) -> int:
    """Append seeded Gaussian rows until the table has ``n_objects`` rows."""
    table = params["object_table"]
    missing = n_objects - table.shape[0]
    if missing > 0:
        fresh = rng.normal(0.0, init_scale, size=(missing, table.shape[1]))
        params["object_table"] = np.vstack([table, fresh])
    return max(missing, 0)


# ---------------------------------------------------------------------------
# loss


def balanced_bce(scores, labels) -> float:
    """Mean BCE with positives up-weighted by #neg/#pos."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.size == 0:
        raise EmptyBatch("balanced_bce needs at least one sample")
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    w = _class_weights(y)
    terms = -(y * np.log(np.maximum(s, LOG_CLAMP)) + (1 - y) * np.log(np.maximum(1 - s, LOG_CLAMP)))
    return float(np.mean(w * terms))


def _class_weights(y):
    n_pos = y.sum()
    n_neg = y.size - n_pos
    w_pos = n_neg / n_pos if n_pos > 0 and n_neg > 0 else 1.0
    return np.where(y == 1, w_pos, 1.0)


def balanced_bce_logit_grad(scores, labels) -> np.ndarray:
    """d loss / d logit for ``scores = sigmoid(logit)``, honouring the clamp."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    w = _class_weights(y)
    g = np.where(y == 1, np.where(s > LOG_CLAMP, s - 1.0, 0.0), np.where(1 - s > LOG_CLAMP, s, 0.0))
    return w * g / s.size


# ---------------------------------------------------------------------------
# batched path


@dataclass
class GraphBatch:
    prefix: list[int]  # prefix[h] = number of nodes within h hops of the queries
    obj_pos: np.ndarray
    obj_rows: np.ndarray
    evt_pos: np.ndarray
    evt_ids: np.ndarray
    ctx_feats: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    cand_feats: np.ndarray
    pair_q: np.ndarray  # index into the query objects (= first prefix[0] rows)
    pair_c: np.ndarray  # index into cand_feats
    labels: np.ndarray | None = None

    @property
    def n_pairs(self) -> int:
        return len(self.pair_q)

    @property
    def query_rows(self) -> np.ndarray:
        return self.obj_rows[: self.prefix[0]]


def build_graph_batch(
    view: WindowView,
    query_objects,
    cand_feats,
    pair_q,
    pair_c,
    featurize,
    n_layers: int,
    labels=None,
) -> GraphBatch:
    """Assemble the receptive field of ``query_objects`` in ``view``.

    ``featurize(text, timestamp)`` supplies context-event input features.
    """
    layers = khop_layers(view, list(query_objects), n_layers)
    prefix = list(np.cumsum([len(x) for x in layers]))
    obj_pos, obj_rows, evt_pos, evt_ids = [], [], [], []
    pos = 0
    for h, nodes in enumerate(layers):
        for n in nodes:
            if h % 2 == 0:
                obj_pos.append(pos)
                obj_rows.append(n)
            else:
                evt_pos.append(pos)
                evt_ids.append(n)
            pos += 1
    local_obj = dict(zip(obj_rows, obj_pos))
    src, dst = list(range(pos)), list(range(pos))
    for e, pe in zip(evt_ids, evt_pos):
        for o in view.objects_of(e):
            po = local_obj.get(o)
            if po is not None:
                src += [po, pe]
                dst += [pe, po]
    src, dst = np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)
    order = np.lexsort((src, dst))
    graph = view.graph
    ctx = [featurize(graph.events[e].text, graph.events[e].timestamp) for e in evt_ids]
    cand_feats = np.asarray(cand_feats, dtype=np.float64)
    return GraphBatch(
        prefix=[int(c) for c in prefix],
        obj_pos=np.asarray(obj_pos, dtype=np.int64),
        obj_rows=np.asarray(obj_rows, dtype=np.int64),
        evt_pos=np.asarray(evt_pos, dtype=np.int64),
        evt_ids=np.asarray(evt_ids, dtype=np.int64),
        ctx_feats=np.vstack(ctx) if ctx else np.zeros((0, cand_feats.shape[1])),
        src=src[order],
        dst=dst[order],
        cand_feats=cand_feats,
        pair_q=np.asarray(pair_q, dtype=np.int64),
        pair_c=np.asarray(pair_c, dtype=np.int64),
        labels=None if labels is None else np.asarray(labels, dtype=np.float64),
    )


def _mlp_params(params, name, n=2):
    ws = [params[f"{name}_w{i + 1}"] for i in range(n)]
    bs = [params[f"{name}_b{i + 1}"] for i in range(n)]
    return ws, bs


def reduce_fwd(e_o, h_e, mode: Reduce):
    if mode is Reduce.DIFFERENCE:
        return e_o - h_e
    if mode is Reduce.CONCAT:
        return np.concatenate([e_o, h_e], axis=-1)
    return e_o * h_e


def reduce_bwd(dx, e_o, h_e, mode: Reduce):
    if mode is Reduce.DIFFERENCE:
        return dx, -dx
    if mode is Reduce.CONCAT:
        d = e_o.shape[-1]
        return dx[..., :d], dx[..., d:]
    return dx * h_e, dx * e_o


class GraphLinkModel:
    """Link scorer: node embedder + GAT + fusion + MLP head on a reduce of the pair."""

    kind = "gnn"

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params

    def check_rows(self, rows):
        n = self.params["object_table"].shape[0]
        if len(rows) and int(np.max(rows)) >= n:
            raise MissingRow(f"object {int(np.max(rows))} has no embedding row (table has {n})")

    def prepare(self, view, query_objects, cand_feats, pair_q, pair_c, featurize, labels=None) -> GraphBatch:
        return build_graph_batch(
            view, query_objects, cand_feats, pair_q, pair_c, featurize, self.config.n_layers, labels
        )

    def forward(self, batch: GraphBatch):
        """Returns ``(scores, logits, cache)``."""
        cfg, p = self.config, self.params
        self.check_rows(batch.obj_rows)
        n_nodes = batch.prefix[-1]
        obj_in = p["object_table"][batch.obj_rows]
        obj_h, obj_cache = mlp_fwd(obj_in, *_mlp_params(p, "obj"))
        for f in (batch.ctx_feats, batch.cand_feats):
            if f.shape[1] != cfg.d_event_in:
                raise DimensionMismatch(f"event features have {f.shape[1]} dims, model expects {cfg.d_event_in}")
        evt_in = np.vstack([batch.ctx_feats, batch.cand_feats])
        evt_h, evt_cache = mlp_fwd(evt_in, *_mlp_params(p, "evt"))
        n_ctx = batch.ctx_feats.shape[0]
        h0 = np.zeros((n_nodes, cfg.d_hidden))
        h0[batch.obj_pos] = obj_h
        h0[batch.evt_pos] = evt_h[:n_ctx]
        h_cand = evt_h[n_ctx:]

        L = cfg.n_layers
        x = h0
        gat_caches = []
        for l in range(L):
            n_out = batch.prefix[L - 1 - l]
            n_in = batch.prefix[L - l]
            end = int(np.searchsorted(batch.dst, n_out))
            x, c = gat_fwd(
                x[:n_in],
                p[f"gat{l}_w"],
                p[f"gat{l}_asrc"],
                p[f"gat{l}_adst"],
                batch.src[:end],
                batch.dst[:end],
                n_out,
                cfg.leaky_slope,
                last=(l == L - 1),
            )
            gat_caches.append(c)
        nq = batch.prefix[0]
        e_gat = x
        e0 = h0[:nq]
        gate = float(sigmoid(p["alpha"][0])) if cfg.fusion is Fusion.GATED else 1.0
        e = (1.0 - gate) * e0 + gate * e_gat

        e_o = e[batch.pair_q]
        h_e = h_cand[batch.pair_c]
        x_pair = reduce_fwd(e_o, h_e, cfg.reduce)
        z, head_cache = mlp_fwd(x_pair, *_mlp_params(p, "head"))
        z = z[:, 0]
        scores = sigmoid(z)
        cache = (batch, obj_cache, evt_cache, gat_caches, e0, e_gat, gate, e_o, h_e, head_cache, n_ctx)
        return scores, z, cache

    def backward(self, cache, dz) -> dict:
        cfg, p = self.config, self.params
        batch, obj_cache, evt_cache, gat_caches, e0, e_gat, gate, e_o, h_e, head_cache, n_ctx = cache
        grads: dict = {}
        ws, _ = _mlp_params(p, "head")
        dx_pair, dws, dbs = mlp_bwd(np.asarray(dz)[:, None], head_cache, ws)
        grads.update(head_w1=dws[0], head_w2=dws[1], head_b1=dbs[0], head_b2=dbs[1])
        de_o, dh_e = reduce_bwd(dx_pair, e_o, h_e, cfg.reduce)

        nq = batch.prefix[0]
        de = np.zeros((nq, cfg.d_hidden))
        np.add.at(de, batch.pair_q, de_o)
        dh_cand = np.zeros((batch.cand_feats.shape[0], cfg.d_hidden))
        np.add.at(dh_cand, batch.pair_c, dh_e)

        if cfg.fusion is Fusion.GATED:
            grads["alpha"] = np.array([np.sum(de * (e_gat - e0)) * gate * (1.0 - gate)])
        else:
            grads["alpha"] = np.zeros(1)
        dx = de * gate
        L = cfg.n_layers
        dh0 = np.zeros((batch.prefix[-1], cfg.d_hidden))
        dh0[:nq] += de * (1.0 - gate)
        for l in range(L - 1, -1, -1):
            dx, g = gat_bwd(dx, gat_caches[l], p[f"gat{l}_w"], p[f"gat{l}_asrc"], p[f"gat{l}_adst"])
            grads[f"gat{l}_w"] = g["w"]
            grads[f"gat{l}_asrc"] = g["a_src"]
            grads[f"gat{l}_adst"] = g["a_dst"]
        dh0[: dx.shape[0]] += dx

        ws, _ = _mlp_params(p, "evt")
        devt = np.vstack([dh0[batch.evt_pos], dh_cand])
        _, dws, dbs = mlp_bwd(devt, evt_cache, ws, need_dx=False)
        grads.update(evt_w1=dws[0], evt_w2=dws[1], evt_b1=dbs[0], evt_b2=dbs[1])
        ws, _ = _mlp_params(p, "obj")
        dobj_in, dws, dbs = mlp_bwd(dh0[batch.obj_pos], obj_cache, ws)
        grads.update(obj_w1=dws[0], obj_w2=dws[1], obj_b1=dbs[0], obj_b2=dbs[1])
        grads["object_table"] = RowGrad(batch.obj_rows.copy(), dobj_in)
        return grads

    def loss_and_grads(self, batch: GraphBatch):
        scores, _, cache = self.forward(batch)
        loss = balanced_bce(scores, batch.labels)
        dz = balanced_bce_logit_grad(scores, batch.labels)
        return loss, scores, self.backward(cache, dz)


# ---------------------------------------------------------------------------
# whole-view operations (reference path; also the public per-node API)


def _full_view_layout(view: WindowView):
    objs = list(view.object_ids())
    evts = list(view.event_ids())
    n_o = len(objs)
    evt_local = {e: n_o + i for i, e in enumerate(evts)}
    n = n_o + len(evts)
    src, dst = list(range(n)), list(range(n))
    for e in evts:
        pe = evt_local[e]
        for o in view.objects_of(e):
            src += [o, pe]
            dst += [pe, o]
    src, dst = np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)
    order = np.lexsort((src, dst))
    return objs, evts, src[order], dst[order]


def embed_nodes(view: WindowView, params, config: ModelConfig, featurize):
    """Initial embeddings for every object and committed event in the view.

    Uncommitted events are not part of the graph and so never appear here.
    """
    objs = list(view.object_ids())
    if objs and max(objs) >= params["object_table"].shape[0]:
        raise MissingRow(f"object {max(objs)} has no embedding row")
    h_obj, _ = mlp_fwd(params["object_table"][objs], *_mlp_params(params, "obj"))
    evts = list(view.event_ids())
    g = view.graph
    feats = np.vstack([featurize(g.events[e].text, g.events[e].timestamp) for e in evts]) if evts else None
    h_evt = mlp_fwd(feats, *_mlp_params(params, "evt"))[0] if evts else np.zeros((0, config.d_hidden))
    return (
        {NodeRef.obj(o): h_obj[i] for i, o in enumerate(objs)},
        {NodeRef.evt(e): h_evt[i] for i, e in enumerate(evts)},
    )


def gat_forward(view: WindowView, h_obj: dict, h_evt: dict, params, config: ModelConfig, return_attention=False):
    """Run every GAT layer over the whole view; return object outputs."""
    objs, evts, src, dst = _full_view_layout(view)
    x = np.vstack([h_obj[NodeRef.obj(o)] for o in objs] + [h_evt[NodeRef.evt(e)] for e in evts])
    n = x.shape[0]
    attention = []
    for l in range(config.n_layers):
        x, cache = gat_fwd(
            x,
            params[f"gat{l}_w"],
            params[f"gat{l}_asrc"],
            params[f"gat{l}_adst"],
            src,
            dst,
            n,
            config.leaky_slope,
            last=(l == config.n_layers - 1),
        )
        attention.append((cache[6], cache[7], cache[3]))
    out = {NodeRef.obj(o): x[i] for i, o in enumerate(objs)}
    return (out, attention) if return_attention else out


def fuse(e0, e_gat, params, config: ModelConfig):
    if config.fusion is Fusion.PLAIN:
        return np.asarray(e_gat)
    g = sigmoid(params["alpha"][0])
    return (1.0 - g) * np.asarray(e0) + g * np.asarray(e_gat)


def score_link(e_o, h_e, params, config: ModelConfig | None = None) -> float:
    e_o, h_e = np.asarray(e_o, dtype=np.float64), np.asarray(h_e, dtype=np.float64)
    if e_o.shape != h_e.shape:
        raise DimensionMismatch(f"{e_o.shape} vs {h_e.shape}")
    mode = config.reduce if config is not None else Reduce.DIFFERENCE
    x = reduce_fwd(e_o, h_e, mode)[None]
    z, _ = mlp_fwd(x, *_mlp_params(params, "head"))
    return float(sigmoid(z[0, 0]))


def project_events(feats, params):
    return mlp_fwd(np.atleast_2d(feats), *_mlp_params(params, "evt"))[0]
