"""Forward/backward primitives.

Each ``*_fwd`` returns ``(out, cache)`` and the matching ``*_bwd`` takes the
upstream gradient plus that cache. Gradients of parameters come back in a
dict keyed by the short names used in the forward call.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.special import expit

sigmoid = expit


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def mlp_fwd(x, weights, biases):
    """Stack of affine layers with ELU between them (none after the last)."""
    pres, acts = [], [x]
    h = x
    for i, (w, b) in enumerate(zip(weights, biases)):
        pre = h @ w + b
        if i < len(weights) - 1:
            h = elu(pre)
            pres.append(pre)
            acts.append(h)
        else:
            h = pre
    return h, (acts, pres)


def mlp_bwd(dout, cache, weights, need_dx=True):
    """Returns ``(dx, dws, dbs)``; ``dx`` is None unless ``need_dx``."""
    acts, pres = cache
    dws, dbs = [None] * len(weights), [None] * len(weights)
    d = dout
    for i in range(len(weights) - 1, -1, -1):
        dws[i] = acts[i].T @ d
        dbs[i] = d.sum(axis=0)
        if i == 0 and not need_dx:
            return None, dws, dbs
        d = d @ weights[i].T
        if i > 0:
            d = d * elu_grad(pres[i - 1])
    return d, dws, dbs


def _segment_starts(dst, n_out):
    # every target has a self-loop, so each segment is non-empty
    return np.searchsorted(dst, np.arange(n_out))


def _attention_matrices(att, src, starts, n_edges, n_out, n_in):
    """One CSR (n_out x n_in) matrix per head; edges are already dst-sorted."""
    indptr = np.append(starts, n_edges)
    return [sparse.csr_matrix((att[:, h], src, indptr), shape=(n_out, n_in)) for h in range(att.shape[1])]


def gat_fwd(x, w, a_src, a_dst, src, dst, n_out, slope=0.2, last=False):
    """One multi-head attention layer over an edge list sorted by ``dst``.

    ``x`` holds the ``n_in`` source rows; targets are the first ``n_out`` rows.
    Heads are concatenated. ELU is applied unless ``last``.
    """
    n_in = x.shape[0]
    heads, dk = a_src.shape
    z = (x @ w).reshape(n_in, heads, dk)
    f_src = np.einsum("nhk,hk->nh", z, a_src)
    f_dst = np.einsum("nhk,hk->nh", z[:n_out], a_dst)
    logit = f_dst[dst] + f_src[src]
    g = np.where(logit > 0, logit, slope * logit)
    starts = _segment_starts(dst, n_out)
    m = np.maximum.reduceat(g, starts, axis=0)
    ex = np.exp(g - m[dst])
    den = np.add.reduceat(ex, starts, axis=0)
    att = ex / den[dst]
    mats = _attention_matrices(att, src, starts, len(dst), n_out, n_in)
    agg = np.hstack([mats[h] @ z[:, h, :] for h in range(heads)])
    out = agg if last else elu(agg)
    cache = (x, z, logit, att, mats, agg, src, dst, starts, slope, last)
    return out, cache


def gat_bwd(dout, cache, w, a_src, a_dst):
    x, z, logit, att, mats, agg, src, dst, starts, slope, last = cache
    n_in, heads, dk = z.shape
    n_out = agg.shape[0]
    dagg = dout if last else dout * elu_grad(agg)
    dagg = dagg.reshape(n_out, heads, dk)
    dz = np.empty_like(z)
    for h in range(heads):
        dz[:, h, :] = mats[h].T @ dagg[:, h, :]
    datt = np.einsum("ehk,ehk->eh", dagg[dst], z[src])
    weighted = np.add.reduceat(att * datt, starts, axis=0)
    dg = att * (datt - weighted[dst])
    dlogit = dg * np.where(logit > 0, 1.0, slope)
    df_src = np.zeros((n_in, heads))
    np.add.at(df_src, src, dlogit)
    df_dst = np.add.reduceat(dlogit, starts, axis=0)
    dz += df_src[:, :, None] * a_src[None]
    dz[:n_out] += df_dst[:, :, None] * a_dst[None]
    grads = {
        "a_src": np.einsum("nh,nhk->hk", df_src, z),
        "a_dst": np.einsum("nh,nhk->hk", df_dst, z[:n_out]),
    }
    dz = dz.reshape(n_in, heads * dk)
    grads["w"] = x.T @ dz
    return dz @ w.T, grads
