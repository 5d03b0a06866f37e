"""High-probability super-level-set construction and adaptive sampling.

Given a posterior model of the score function, the certified set for a
context is {theta : mu(theta) > beta * sigma(theta)}. The threshold beta
comes either from a union bound over a declared horizon of draws (so that
all draws satisfy the true constraint with probability >= 1 - delta) or
from a relaxation anchored at the most reliable point in the box.

Sampling from the certified set uses an adaptive proposal: a mixture of
axis-aligned truncated Gaussians centered on accepted candidates, refreshed
together with plain uniform proposals, with every accepted candidate
carrying an inverse-proposal-density weight so that the retained set
approximates a uniform draw from the certified set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from .boxopt import maximize_box
from .gp import Box, PosteriorModel, with_context

V_MIN = 1e-6
V_MAX = 1e6
SIGMA_FLOOR = 1e-12

# Membership predicate over a batch of thetas: (k, dim) -> (k,) bools.
Membership = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LevelSetConfig:
    """Risk budget for certified sampling.

    ``delta`` is the total failure probability allowed across a horizon of
    ``horizon`` draws; per-draw weights follow ``pi_rule`` (only "uniform"
    is implemented: every draw gets weight equal to the horizon length).
    ``rho`` is the relaxation factor used when the union-bound set is empty.
    """

    delta: float
    horizon: int = 1
    rho: float = 0.95
    pi_rule: str = "uniform"

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.pi_rule != "uniform":
            raise ValueError(f"unknown pi rule: {self.pi_rule!r}")

    def per_sample_weight(self, i: int) -> float:
        # Uniform rule: sum of inverse weights over the horizon equals 1.
        return float(self.horizon)


def union_bound_beta(cfg: LevelSetConfig, i: int = 1) -> float:
    """Threshold multiplier sqrt(2 log(pi_i / (2 delta))) for draw ``i``."""
    pi_i = cfg.per_sample_weight(i)
    arg = pi_i / (2.0 * cfg.delta)
    if arg < 1.0:
        raise ValueError(
            f"risk budget too loose: pi_i/(2 delta) = {arg:.4g} < 1 makes the bound vacuous"
        )
    return math.sqrt(2.0 * math.log(arg))


def max_mean_sd_ratio(
    model: PosteriorModel,
    alpha: np.ndarray,
    box: Box,
    rng: np.random.Generator | None = None,
    n_seeds: int = 128,
) -> tuple[np.ndarray, float]:
    """Most reliable point in the box and its mu/sigma value.

    The ratio surface is a narrow needle when the feasible region is small,
    so the multi-start pool is augmented with the model's own training
    thetas, which concentrate wherever the model is confident.
    """
    rng = rng if rng is not None else np.random.default_rng(0)

    def ratio(thetas):
        mean, sd = model.predict_thetas(thetas, alpha)
        return mean / np.maximum(sd, SIGMA_FLOOR)

    return maximize_box(
        ratio, box, rng, n_seeds=n_seeds, extra_seeds=model.dataset.thetas
    )


def relaxed_beta(
    model: PosteriorModel,
    alpha: np.ndarray,
    box: Box,
    rho: float = 0.95,
    rng: np.random.Generator | None = None,
    z_star: float | None = None,
) -> float:
    """Relaxed threshold Phi^-1(rho * Phi(max mu/sigma)).

    ``z_star`` short-circuits the internal maximization when the caller has
    already located the most reliable point.
    """
    if z_star is None:
        _, z_star = max_mean_sd_ratio(model, alpha, box, rng)
    if rho == 1.0:
        return float(z_star)
    q = rho * float(ndtr(z_star))
    if q <= 0.0:
        raise ValueError("relaxed threshold undefined: rho * Phi(z*) underflowed to 0")
    return float(ndtri(q))


def is_member(
    model: PosteriorModel, alpha: np.ndarray, beta: float, thetas: np.ndarray
) -> np.ndarray:
    """Strict certified-set membership mu > beta * sigma for a theta batch."""
    mean, sd = model.predict_thetas(thetas, alpha)
    return mean > beta * sd


def model_membership(
    model: PosteriorModel, alpha: np.ndarray, beta: float
) -> Membership:
    return lambda thetas: is_member(model, alpha, beta, thetas)


class TruncatedGaussianMixture:
    """Mixture of axis-aligned truncated Gaussians over a box.

    All components share one per-dimension variance vector; each component
    is truncated to the box, so the mixture density integrates to one over
    the box. Sampling is per-dimension inverse-CDF.
    """

    def __init__(
        self,
        weights: np.ndarray,
        means: np.ndarray,
        variances: np.ndarray,
        box: Box,
    ):
        weights = np.asarray(weights, dtype=float)
        means = np.atleast_2d(np.asarray(means, dtype=float))
        variances = np.asarray(variances, dtype=float)
        if len(weights) != len(means):
            raise ValueError("one weight per component required")
        if means.shape[1] != box.dim or variances.shape != (box.dim,):
            raise ValueError("component dimension mismatch")
        if np.any(variances <= 0):
            raise ValueError("variances must be positive")
        total = weights.sum()
        if not total > 0:
            raise ValueError("weights must have positive mass")
        self.weights = weights / total
        self.means = means
        self.variances = variances
        self.box = box
        self._sd = np.sqrt(variances)
        # Standardized truncation bounds per component and dimension.
        self._a = (box.lower - means) / self._sd
        self._b = (box.upper - means) / self._sd
        self._cdf_a = ndtr(self._a)
        self._mass = ndtr(self._b) - self._cdf_a

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comps = rng.choice(len(self.weights), size=n, p=self.weights)
        u = rng.uniform(size=(n, self.box.dim))
        lo = self._cdf_a[comps]
        mass = self._mass[comps]
        q = np.clip(lo + u * mass, 1e-15, 1.0 - 1e-15)
        x = self.means[comps] + self._sd * ndtri(q)
        return self.box.clip(x)

    def pdf(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if not np.all(self.box.contains(thetas)):
            raise ValueError("pdf queried outside the mixture bounds")
        # (k, n_comp, dim) standardized distances.
        z = (thetas[:, None, :] - self.means[None, :, :]) / self._sd
        log_comp = (
            -0.5 * z * z
            - 0.5 * math.log(2.0 * math.pi)
            - np.log(self._sd)
            - np.log(self._mass)[None, :, :]
        ).sum(axis=2)
        return np.exp(log_comp) @ self.weights


def sample_tgmm(
    n: int, mix: TruncatedGaussianMixture, rng: np.random.Generator
) -> np.ndarray:
    return mix.sample(n, rng)


def tgmm_pdf(thetas: np.ndarray, mix: TruncatedGaussianMixture) -> np.ndarray:
    return mix.pdf(thetas)


class LevelSetUnreachableError(RuntimeError):
    """Buffer construction exceeded its iteration cap without enough members."""


def sample_buffer(
    member: Membership,
    box: Box,
    theta_init: np.ndarray,
    n: int,
    m: int,
    rng: np.random.Generator,
    init_weights: np.ndarray | None = None,
    max_iters: int = 1000,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grow a pool of certified candidates and draw a weighted buffer from it.

    Each iteration proposes ``n`` points from the truncated-Gaussian mixture
    centered on the current pool and ``n`` uniform points, keeps the members,
    and attaches inverse-proposal-density weights (1/pdf for mixture draws,
    box volume for uniform draws) on a common absolute scale. The proposal
    variance doubles when at least half the mixture draws are accepted and
    halves otherwise. Once the pool exceeds ``m``, ``m`` elements are drawn
    without replacement by weight; returns (buffer, raw weights, final v).
    """
    theta_init = np.atleast_2d(np.asarray(theta_init, dtype=float))
    keep = member(theta_init)
    if not np.any(keep):
        raise LevelSetUnreachableError(
            "no initial candidate satisfies the certified-set membership"
        )
    pool = theta_init[keep]
    if init_weights is None:
        weights = np.full(len(pool), box.volume)
    else:
        weights = np.asarray(init_weights, dtype=float)[keep]
    v = np.ones(box.dim)

    for _ in range(max_iters):
        mix = TruncatedGaussianMixture(weights, pool, v, box)
        proposals = mix.sample(n, rng)
        accepted = proposals[member(proposals)]
        w_accepted = 1.0 / mix.pdf(accepted) if len(accepted) else np.empty(0)
        v = v / 2.0 if len(accepted) < n / 2.0 else v * 2.0
        np.clip(v, V_MIN, V_MAX, out=v)

        uniform = box.sample_uniform(n, rng)
        kept_uniform = uniform[member(uniform)]
        w_uniform = np.full(len(kept_uniform), box.volume)

        pool = np.vstack([pool, kept_uniform, accepted])
        weights = np.concatenate([weights, w_uniform, w_accepted])
        if len(pool) > m:
            # Sequential weighted draws without replacement via Gumbel keys.
            keys = np.log(np.maximum(weights, 1e-300)) + rng.gumbel(size=len(weights))
            order = np.argsort(-keys, kind="stable")[:m]
            return pool[order], weights[order], v
    raise LevelSetUnreachableError(
        f"level set unreachable: fewer than {m} certified candidates after {max_iters} iterations"
    )


@dataclass
class BufferState:
    """Mutable sampler buffer: candidates, raw weights, last proposal variance."""

    thetas: np.ndarray
    weights: np.ndarray
    v: np.ndarray
    beta: float
    n: int
    m: int

    @property
    def p(self) -> np.ndarray:
        total = self.weights.sum()
        return self.weights / total if total > 0 else self.weights

    def __len__(self) -> int:
        return len(self.thetas)


class AdaptiveSampler:
    """Stream of high-probability feasible parameters for one context.

    Yields buffered candidates in weighted order and refills the buffer from
    :func:`sample_buffer` whenever it drops to half of the target size ``m``;
    buffer survivors seed the refill. The stream never ends unless the
    certified set is unreachable.
    """

    def __init__(
        self,
        member: Membership,
        box: Box,
        seed_point: np.ndarray,
        rng: np.random.Generator,
        n: int = 100,
        m: int = 50,
        beta: float = float("nan"),
        max_iters: int = 1000,
    ):
        self.member = member
        self.box = box
        self.rng = rng
        self.seed_point = np.asarray(seed_point, dtype=float).reshape(1, -1)
        self.state = BufferState(
            thetas=np.empty((0, box.dim)),
            weights=np.empty(0),
            v=np.ones(box.dim),
            beta=beta,
            n=n,
            m=m,
        )
        self.max_iters = max_iters

    @classmethod
    def for_model(
        cls,
        model: PosteriorModel,
        alpha: np.ndarray,
        box: Box,
        rng: np.random.Generator,
        rho: float = 0.95,
        beta: float | None = None,
        seed_point: np.ndarray | None = None,
        n: int = 100,
        m: int = 50,
    ) -> "AdaptiveSampler":
        """Build the sampler from a posterior model and context.

        ``beta``/``seed_point`` may be supplied to reuse a precomputed
        threshold and most-reliable point (they are deterministic per model
        and context, so callers running many samplers share them).
        """
        if seed_point is None or beta is None:
            theta_star, z_star = max_mean_sd_ratio(model, alpha, box, rng)
            if seed_point is None:
                seed_point = theta_star
            if beta is None:
                beta = relaxed_beta(model, alpha, box, rho, z_star=z_star)
        return cls(
            model_membership(model, alpha, beta),
            box,
            seed_point,
            rng,
            n=n,
            m=m,
            beta=beta,
        )

    def _refill(self):
        state = self.state
        if len(state):
            init, init_w = state.thetas, state.weights
        else:
            init, init_w = self.seed_point, None
        thetas, weights, v = sample_buffer(
            self.member,
            self.box,
            init,
            state.n,
            state.m,
            self.rng,
            init_weights=init_w,
            max_iters=self.max_iters,
        )
        state.thetas, state.weights, state.v = thetas, weights, v

    def _pop(self) -> np.ndarray:
        state = self.state
        if 2 * len(state) <= state.m:
            self._refill()
        theta = state.thetas[0].copy()
        state.thetas = state.thetas[1:]
        state.weights = state.weights[1:]
        assert bool(self.member(theta.reshape(1, -1))[0]), "yielded non-member"
        return theta

    def draw(self) -> np.ndarray:
        return self._pop()

    def __iter__(self):
        while True:
            yield self.draw()


class SamplerTimeout(RuntimeError):
    pass


class RejectionSampler:
    """Uniform-proposal rejection against the same membership predicate.

    Proposals are tested one at a time, which is the honest baseline cost
    model for a stream; ``deadline`` (seconds on perf_counter) bounds a
    single draw.
    """

    def __init__(
        self,
        member: Membership,
        box: Box,
        rng: np.random.Generator,
        deadline: float | None = None,
    ):
        self.member = member
        self.box = box
        self.rng = rng
        self.deadline = deadline
        self.n_proposals = 0

    def draw(self) -> np.ndarray:
        from time import perf_counter

        checked = 0
        while True:
            theta = self.box.sample_uniform(1, self.rng)
            self.n_proposals += 1
            if bool(self.member(theta)[0]):
                return theta[0]
            checked += 1
            if self.deadline is not None and checked % 256 == 0:
                if perf_counter() > self.deadline:
                    raise SamplerTimeout("rejection sampling exceeded its deadline")

    def __iter__(self):
        while True:
            yield self.draw()
