"""Analytic ground-truth score functions standing in for physical skills.

Each oracle exposes a continuous score g(theta, alpha) whose sign decides
true feasibility, an exact membership test, uniform sampling from the true
feasible region (used to assemble benchmark training sets), and the boxes
that theta and alpha live in. Compared to running a simulator these are
instant and their geometry is known exactly, which is what the benchmark
harness needs to measure false positives and sampler efficiency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gp import Box

# Two-rectangle world: a wide-but-thin pair of feasible patches separated
# along dimension 0, with very different extents along dimension 1. The
# vertical spread of the big rectangle exceeds the horizontal gap, which is
# exactly the trap a fixed diversity metric falls into.
RECT_A = (np.array([0.30, 0.05]), np.array([0.40, 0.65]))  # area 0.06
RECT_B = (np.array([0.55, 0.35]), np.array([0.65, 0.55]))  # area 0.02


@dataclass(frozen=True)
class SyntheticOracle:
    """Named analytic score function with exact feasibility geometry."""

    name: str
    theta_box: Box
    context_box: Box
    score: Callable[[np.ndarray, np.ndarray], np.ndarray]
    sample_feasible: Callable[[np.ndarray, int, np.random.Generator], np.ndarray]
    default_noise_sd: float = 0.05

    @property
    def d_theta(self) -> int:
        return self.theta_box.dim

    @property
    def d_alpha(self) -> int:
        return self.context_box.dim if self.context_box.lower.size else 0

    def feasible(self, thetas: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        return self.score(np.atleast_2d(thetas), alpha) > 0.0

    def sample_context(self, rng: np.random.Generator) -> np.ndarray:
        if self.d_alpha == 0:
            return np.empty(0)
        return self.context_box.sample_uniform(1, rng)[0]


@dataclass(frozen=True)
class _NoContext:
    """Stand-in for a context box when the oracle takes no context."""
    lower: np.ndarray = field(default_factory=lambda: np.empty(0))
    upper: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def dim(self) -> int:
        return 0

    def sample_uniform(self, n, rng):
        return np.empty((n, 0))


def _rect_signed_depth(thetas: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    half = (hi - lo) / 2.0
    center = (lo + hi) / 2.0
    return np.min(half - np.abs(thetas - center), axis=1)


def _rect2d_score(thetas: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    thetas = np.atleast_2d(thetas)
    depth = np.maximum(
        _rect_signed_depth(thetas, *RECT_A), _rect_signed_depth(thetas, *RECT_B)
    )
    return np.clip(10.0 * depth, -1.0, 1.0)


def _rect2d_sample(alpha: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    areas = np.array([0.06, 0.02])
    rects = [RECT_A, RECT_B]
    picks = rng.choice(2, size=n, p=areas / areas.sum())
    out = np.empty((n, 2))
    for i, k in enumerate(picks):
        lo, hi = rects[k]
        out[i] = rng.uniform(lo, hi)
    return out


def _disk_oracle(name: str, area_fraction: float) -> SyntheticOracle:
    radius = math.sqrt(area_fraction / math.pi)
    center = np.array([0.5, 0.5])

    def score(thetas, alpha):
        thetas = np.atleast_2d(thetas)
        dist = np.linalg.norm(thetas - center, axis=1)
        return np.clip((radius - dist) / radius, -1.0, 1.0)

    def sample_feasible(alpha, n, rng):
        ang = rng.uniform(0.0, 2.0 * math.pi, size=n)
        r = radius * np.sqrt(rng.uniform(size=n))
        return center + np.column_stack([r * np.cos(ang), r * np.sin(ang)])

    return SyntheticOracle(
        name=name,
        theta_box=Box.unit(2),
        context_box=_NoContext(),
        score=score,
        sample_feasible=sample_feasible,
        default_noise_sd=0.02,
    )


def _pour_center_axes(alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    alpha = np.asarray(alpha, dtype=float).ravel()
    center = 0.40 + 0.20 * alpha
    axes = 0.22 + 0.06 * np.roll(alpha, -1)
    return center, axes


def _pour_score(thetas: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    thetas = np.atleast_2d(thetas)
    center, axes = _pour_center_axes(alpha)
    rho = np.sqrt(np.sum(((thetas - center) / axes) ** 2, axis=1))
    return np.exp(1.0 - rho) - 1.0


def _pour_sample(alpha: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    center, axes = _pour_center_axes(alpha)
    d = center.size
    z = rng.standard_normal((n, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = rng.uniform(size=(n, 1)) ** (1.0 / d)
    return center + axes * z * r


def _push_position(thetas: np.ndarray) -> np.ndarray:
    thetas = np.atleast_2d(thetas)
    return 3.0 * np.column_stack(
        [thetas[:, :3].sum(axis=1), thetas[:, 3:].sum(axis=1)]
    )


def _push_goal(alpha: np.ndarray) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float).ravel()
    return 2.0 + 5.0 * alpha


def _push_score(thetas: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    dist = np.linalg.norm(_push_position(thetas) - _push_goal(alpha), axis=1)
    return np.clip((2.0 - dist) / 2.0, -1.0, 1.0)


def _push_sample(alpha: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((n, 6))
    got = 0
    while got < n:
        cand = rng.uniform(size=(4 * (n - got) + 16, 6))
        ok = _push_score(cand, alpha) > 0.0
        take = cand[ok][: n - got]
        out[got : got + len(take)] = take
        got += len(take)
    return out


def _make_rect2d() -> SyntheticOracle:
    return SyntheticOracle(
        name="rect2d",
        theta_box=Box.unit(2),
        context_box=_NoContext(),
        score=_rect2d_score,
        sample_feasible=_rect2d_sample,
        default_noise_sd=0.1,
    )


def _make_pour4d() -> SyntheticOracle:
    return SyntheticOracle(
        name="pour4d",
        theta_box=Box.unit(4),
        context_box=Box.unit(4),
        score=_pour_score,
        sample_feasible=_pour_sample,
        default_noise_sd=0.05,
    )


def _make_push6d() -> SyntheticOracle:
    return SyntheticOracle(
        name="push6d",
        theta_box=Box.unit(6),
        context_box=Box.unit(2),
        score=_push_score,
        sample_feasible=_push_sample,
        default_noise_sd=0.05,
    )


_BUILDERS: dict[str, Callable[[], SyntheticOracle]] = {
    "rect2d": _make_rect2d,
    "pour4d": _make_pour4d,
    "push6d": _make_push6d,
    "disk1pct": lambda: _disk_oracle("disk1pct", 0.01),
    "disk0p1pct": lambda: _disk_oracle("disk0p1pct", 0.001),
}

ORACLE_NAMES = tuple(sorted(_BUILDERS))


def get_oracle(name: str) -> SyntheticOracle:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(
            f"unknown oracle {name!r}; available: {', '.join(ORACLE_NAMES)}"
        ) from None
