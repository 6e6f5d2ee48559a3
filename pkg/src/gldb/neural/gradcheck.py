"""Reverse-mode gradients vs central finite differences on a toy graph."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..graph import DynamicGraph, build_subgraph, commit_entry, merge_objects, window_view
from ..logmodel import LogEntry
from .model import GraphLinkModel, ModelConfig, RowGrad, balanced_bce, balanced_bce_logit_grad, init_params

FD_EPS = 1e-4
# |a - n| is divided by max(|a|, |n|, REL_FLOOR) so that coordinates whose true
# gradient is ~0 are judged on absolute error instead of noise.
REL_FLOOR = 1e-6
MIN_EPS = 1e-9


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_param: dict[str, dict]
    n_coords: int
    seed: int
    n_reduced_steps: int = 0  # coordinates whose FD step had to avoid a kink

    def to_dict(self) -> dict:
        return {
            "max_rel_err": self.max_rel_err,
            "n_coords": self.n_coords,
            "n_reduced_steps": self.n_reduced_steps,
            "seed": self.seed,
            "per_param": self.per_param,
        }


def toy_problem(config: ModelConfig, seed: int, n_objects: int = 3, n_events: int = 3):
    """Random 6-node object/event graph, two candidate events and a labelled pair batch."""
    rng = np.random.default_rng(seed)
    g = DynamicGraph()
    keys = tuple(f"o{i}" for i in range(n_objects))
    merge_objects(g, build_subgraph(LogEntry(0, 0, "", keys), g))
    feats = {}
    for e in range(1, n_events + 1):
        k = int(rng.integers(1, n_objects + 1))
        objs = sorted(rng.choice(n_objects, size=k, replace=False).tolist())
        sub = build_subgraph(LogEntry(e, e, f"evt{e}", tuple(keys[o] for o in objs)), g)
        merge_objects(g, sub)
        commit_entry(g, sub)
        feats[(f"evt{e}", e)] = rng.normal(size=config.d_event_in)
    params = init_params(config, rng, n_objects=g.num_objects)
    model = GraphLinkModel(config, params)
    view = window_view(g, 100)
    cand = rng.normal(size=(2, config.d_event_in))
    pair_q = [0, 1, 2, 0, 1, 2]
    pair_c = [0, 0, 1, 1, 1, 0]
    labels = [1, 0, 1, 0, 0, 1]
    batch = model.prepare(view, list(range(n_objects)), cand, pair_q, pair_c, lambda text, t: feats[(text, t)], labels)
    return model, batch


def analytic_grads(model: GraphLinkModel, batch) -> dict[str, np.ndarray]:
    scores, _, cache = model.forward(batch)
    grads = model.backward(cache, balanced_bce_logit_grad(scores, batch.labels))
    dense = {}
    for name, g in grads.items():
        if isinstance(g, RowGrad):
            full = np.zeros_like(model.params[name])
            np.add.at(full, g.rows, g.values)
            dense[name] = full
        else:
            dense[name] = g
    return dense


def _loss(model, batch):
    """Loss plus the sign pattern of every LeakyReLU input (its kinks)."""
    scores, _, cache = model.forward(batch)
    signs = tuple(np.signbit(c[2]).tobytes() for c in cache[3])
    return balanced_bce(scores, batch.labels), signs


def _central_difference(model, batch, flat, j, eps, base_signs):
    """Central difference at coordinate ``j``; the step is shrunk while the
    probe points land on different sides of a LeakyReLU kink."""
    orig = flat[j]
    step = eps
    while True:
        flat[j] = orig + step
        lp, sp = _loss(model, batch)
        flat[j] = orig - step
        lm, sm = _loss(model, batch)
        flat[j] = orig
        if (sp == base_signs and sm == base_signs) or step < MIN_EPS:
            return (lp - lm) / (2 * step), step
        step /= 10.0


def grad_check(config: ModelConfig | None = None, seed: int = 0, coords_per_param: int = 16, eps: float = FD_EPS) -> GradCheckReport:
    """Compare analytic and central-difference gradients on >= 200 coordinates."""
    config = config or ModelConfig()
    model, batch = toy_problem(config, seed)
    grads = analytic_grads(model, batch)
    _, base_signs = _loss(model, batch)
    rng = np.random.default_rng(seed + 7919)
    names = sorted(model.params)
    per_coord = max(coords_per_param, -(-200 // len(names)))
    per_param = {}
    worst = 0.0
    total = 0
    reduced = 0
    for name in names:
        p = model.params[name]
        if name == "object_table":
            flat_idx = [r * p.shape[1] + c for r in batch.obj_rows for c in range(p.shape[1])]
        else:
            flat_idx = range(p.size)
        k = min(per_coord, len(flat_idx))
        picks = rng.choice(len(flat_idx), size=k, replace=False)
        errs = []
        flat = p.reshape(-1)
        for i in picks.tolist():
            j = flat_idx[i]
            num, used = _central_difference(model, batch, flat, j, eps, base_signs)
            reduced += used < eps
            ana = grads[name].reshape(-1)[j]
            errs.append(abs(ana - num) / max(abs(ana), abs(num), REL_FLOOR))
        per_param[name] = {"max_rel_err": float(max(errs)), "n_coords": k}
        worst = max(worst, max(errs))
        total += k
    return GradCheckReport(float(worst), per_param, total, seed, reduced)


def small_config(**kw) -> ModelConfig:
    """Narrow model used where the default width would only slow checks down."""
    base = ModelConfig(d_obj=16, d_hidden=16, n_heads=4, d_event_in=12)
    return replace(base, **kw)
