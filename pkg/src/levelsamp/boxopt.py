"""Derivative-free maximization of batch objectives over a box.

Multi-start scheme shared by the acquisition loop and the certified-set
threshold computation: score a pool of uniform seeds in one batch, then
refine the most promising seeds by cyclic per-coordinate golden-section
line searches (run in lockstep across seeds so every refinement step is a
single batched objective call). The returned point always scores at least
as high as every point the search evaluated; ties go to the lowest index.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .gp import Box

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

Objective = Callable[[np.ndarray], np.ndarray]  # (k, dim) -> (k,)


def _line_search(
    f: Objective,
    X: np.ndarray,
    vals: np.ndarray,
    coord: int,
    lo: float,
    hi: float,
    iters: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Golden-section search on one coordinate, batched across rows of X."""
    k = X.shape[0]
    a = np.full(k, lo)
    b = np.full(k, hi)
    best_x = X[:, coord].copy()
    best_v = vals.copy()

    def probe(t):
        Xt = X.copy()
        Xt[:, coord] = t
        return f(Xt)

    c = b - _INVPHI * (b - a)
    e = a + _INVPHI * (b - a)
    fc = probe(c)
    fe = probe(e)
    for t, ft in ((c, fc), (e, fe)):
        improved = ft > best_v
        best_x = np.where(improved, t, best_x)
        best_v = np.where(improved, ft, best_v)
    for _ in range(max(iters - 2, 0)):
        left = fc > fe
        # Shrink toward c where the left probe wins, toward e otherwise.
        b = np.where(left, e, b)
        a = np.where(left, a, c)
        c_new = b - _INVPHI * (b - a)
        e_new = a + _INVPHI * (b - a)
        # One fresh probe per row; the surviving probe is reused.
        carry = np.where(left, fc, fe)
        t_new = np.where(left, c_new, e_new)
        f_new = probe_col(f, X, coord, t_new)
        fc = np.where(left, f_new, carry)
        fe = np.where(left, carry, f_new)
        c, e = c_new, e_new
        improved = f_new > best_v
        best_x = np.where(improved, t_new, best_x)
        best_v = np.where(improved, f_new, best_v)
    X = X.copy()
    X[:, coord] = best_x
    return X, best_v


def probe_col(f: Objective, X: np.ndarray, coord: int, t: np.ndarray) -> np.ndarray:
    Xt = X.copy()
    Xt[:, coord] = t
    return f(Xt)


def maximize_box(
    f: Objective,
    box: Box,
    rng: np.random.Generator,
    n_seeds: int = 64,
    line_iters: int = 50,
    refine_top: int = 4,
    sweeps: int = 2,
    extra_seeds: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Maximize ``f`` over ``box``; returns (argmax point, value).

    ``n_seeds`` uniform seeds (plus any ``extra_seeds``, e.g. known good
    points when the objective has narrow peaks) are scored in one call; the
    ``refine_top`` best are refined with ``sweeps`` passes of golden-section
    line search (``line_iters`` probes per coordinate).
    """
    seeds = box.sample_uniform(max(n_seeds, 1), rng)
    if extra_seeds is not None and len(extra_seeds):
        extra = box.clip(np.atleast_2d(np.asarray(extra_seeds, dtype=float)))
        seeds = np.vstack([seeds, extra])
    vals = np.asarray(f(seeds), dtype=float)
    order = np.argsort(-vals, kind="stable")
    best_idx = order[0]
    best_x = seeds[best_idx].copy()
    best_v = float(vals[best_idx])

    k = min(max(refine_top, 1), len(seeds))
    X = seeds[order[:k]].copy()
    V = vals[order[:k]].copy()
    for _ in range(max(sweeps, 0)):
        for d in range(box.dim):
            X, V = _line_search(
                f, X, V, d, float(box.lower[d]), float(box.upper[d]), line_iters
            )
    j = int(np.argmax(V))
    if V[j] > best_v:
        best_x, best_v = X[j].copy(), float(V[j])
    return np.clip(best_x, box.lower, box.upper), best_v
