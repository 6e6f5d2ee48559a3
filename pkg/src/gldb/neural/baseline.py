"""Graph-free baseline: a 3-layer MLP over [object embedding ‖ event feature]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import mlp_bwd, mlp_fwd, sigmoid
from .model import ModelConfig, RowGrad, _he_normal, balanced_bce, balanced_bce_logit_grad

N_LAYERS = 3


@dataclass
class PairBatch:
    query_rows: np.ndarray
    cand_feats: np.ndarray
    pair_q: np.ndarray
    pair_c: np.ndarray
    labels: np.ndarray | None = None


def init_mlp_params(config: ModelConfig, rng: np.random.Generator, n_objects: int = 0) -> dict[str, np.ndarray]:
    d_in = config.d_obj + config.d_event_in
    dims = [d_in, config.d_hidden, config.d_hidden, 1]
    p = {"object_table": rng.normal(0.0, config.init_scale, size=(n_objects, config.d_obj))}
    for i in range(N_LAYERS):
        p[f"mlp_w{i + 1}"] = _he_normal(rng, dims[i], dims[i + 1])
        p[f"mlp_b{i + 1}"] = np.zeros(dims[i + 1])
    return p


class MLPLinkModel:
    kind = "mlp"

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params

    def _layers(self):
        ws = [self.params[f"mlp_w{i + 1}"] for i in range(N_LAYERS)]
        bs = [self.params[f"mlp_b{i + 1}"] for i in range(N_LAYERS)]
        return ws, bs

    def prepare(self, view, query_objects, cand_feats, pair_q, pair_c, featurize=None, labels=None) -> PairBatch:
        return PairBatch(
            np.asarray(list(query_objects), dtype=np.int64),
            np.asarray(cand_feats, dtype=np.float64),
            np.asarray(pair_q, dtype=np.int64),
            np.asarray(pair_c, dtype=np.int64),
            None if labels is None else np.asarray(labels, dtype=np.float64),
        )

    def forward(self, batch: PairBatch):
        rows = batch.query_rows[batch.pair_q]
        x = np.hstack([self.params["object_table"][rows], batch.cand_feats[batch.pair_c]])
        z, cache = mlp_fwd(x, *self._layers())
        z = z[:, 0]
        return sigmoid(z), z, (batch, rows, cache)

    def backward(self, cache, dz) -> dict:
        batch, rows, mcache = cache
        ws, _ = self._layers()
        dx, dws, dbs = mlp_bwd(np.asarray(dz)[:, None], mcache, ws)
        grads = {}
        for i in range(N_LAYERS):
            grads[f"mlp_w{i + 1}"] = dws[i]
            grads[f"mlp_b{i + 1}"] = dbs[i]
        uniq, inv = np.unique(rows, return_inverse=True)
        drow = np.zeros((len(uniq), self.config.d_obj))
        np.add.at(drow, inv, dx[:, : self.config.d_obj])
        grads["object_table"] = RowGrad(uniq, drow)
        return grads

    def loss_and_grads(self, batch: PairBatch):
        scores, _, cache = self.forward(batch)
        loss = balanced_bce(scores, batch.labels)
        return loss, scores, self.backward(cache, balanced_bce_logit_grad(scores, batch.labels))
