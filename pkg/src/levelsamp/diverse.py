"""Diversity-aware selection over the certified buffer and online kernel
adaptation from planner feedback.

A set of yielded samples is scored by the log-determinant of its Gram
matrix under a squared-exponential similarity kernel; greedily yielding the
buffer element with maximal conditional variance given the history
maximizes that score with the usual (1 - 1/e) guarantee. When the planner
rejects a sample, the inverse lengthscale of the feature that contributed
most to its selection is decayed, so that over a sequence of tasks the
notion of "different" bends toward the features that actually matter.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .gp import Box, KernelParams, kernel_matrix
from .superlevel import AdaptiveSampler, Membership

DPP_NOISE = 0.1
DECAY = 0.3
INV_LENGTHSCALE_FLOOR = 1e-3


def log_det_diversity(
    points: np.ndarray, kernel: KernelParams, noise: float = DPP_NOISE
) -> float:
    """log det(Gram / noise^2 + I) of the point set; empty sets score 0."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0 or points.size == 0:
        return 0.0
    G = kernel_matrix(points, points, kernel) / noise**2 + np.eye(len(points))
    L = np.linalg.cholesky(G)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def conditional_variance(
    thetas: np.ndarray,
    history: np.ndarray,
    kernel: KernelParams,
    noise: float = DPP_NOISE,
) -> np.ndarray:
    """Variance of each theta conditioned on the history under ``kernel``.

    Batched over thetas; an empty history gives the prior variance.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    history = np.atleast_2d(np.asarray(history, dtype=float))
    prior = np.full(thetas.shape[0], kernel.signal_variance)
    if history.shape[0] == 0 or history.size == 0:
        return prior
    G = kernel_matrix(history, history, kernel) + noise**2 * np.eye(len(history))
    L = np.linalg.cholesky(G)
    cross = kernel_matrix(history, thetas, kernel)
    v = solve_triangular(L, cross, lower=True, check_finite=False)
    out = prior - np.sum(v * v, axis=0)
    return np.maximum(out, 0.0)


def feature_importances(
    theta: np.ndarray,
    history: np.ndarray,
    kernel: KernelParams,
    noise: float = DPP_NOISE,
) -> np.ndarray:
    """Per-dimension contribution of ``theta``'s novelty relative to the history.

    Dimension d is scored by the conditional variance computed as if every
    other inverse lengthscale were zero, while reusing the full-kernel
    factorization (one solve shared by all dimensions).
    """
    theta = np.asarray(theta, dtype=float).ravel()
    history = np.atleast_2d(np.asarray(history, dtype=float))
    if history.shape[0] == 0:
        raise ValueError("feature importances need a non-empty history")
    G = kernel_matrix(history, history, kernel) + noise**2 * np.eye(len(history))
    factor = cho_factor(G, lower=True, check_finite=False)
    sv = kernel.signal_variance
    tau = np.empty(kernel.dim)
    for d in range(kernel.dim):
        r = kernel.inv_lengthscales[d] * (history[:, d] - theta[d])
        xi_d = sv * np.exp(-r * r)
        tau[d] = sv - float(xi_d @ cho_solve(factor, xi_d, check_finite=False))
    return tau


def decay_top_feature(
    kernel: KernelParams,
    failed_theta: np.ndarray,
    history: np.ndarray,
    rate: float = DECAY,
    noise: float = DPP_NOISE,
) -> KernelParams:
    """Shrink the inverse lengthscale of the dimension that made the failed
    sample look most novel; ties break to the lowest index.

    Returns a new kernel; only one coordinate changes, and it never drops
    below the floor that keeps the dimension recoverable.
    """
    tau = feature_importances(failed_theta, history, kernel, noise)
    d = int(np.argmax(tau))
    l = kernel.inv_lengthscales.copy()
    l[d] = max((1.0 - rate) * l[d], INV_LENGTHSCALE_FLOOR)
    return KernelParams(l, kernel.signal_variance)


class DiverseSampler:
    """Certified-set stream that yields maximally novel samples first.

    The first draw is the supplied most-reliable point; each later draw is
    the buffer element with the highest conditional variance given all
    previously yielded samples. ``history_before_last`` exposes the yielded
    set as it stood before the most recent draw, which is what online kernel
    adaptation needs when that draw gets rejected. ``diversity_kernel`` may
    be swapped between draws.
    """

    def __init__(
        self,
        member: Membership,
        box: Box,
        seed_point: np.ndarray,
        rng: np.random.Generator,
        diversity_kernel: KernelParams | None = None,
        noise: float = DPP_NOISE,
        n: int = 100,
        m: int = 50,
        max_iters: int = 1000,
    ):
        self._inner = AdaptiveSampler(
            member, box, seed_point, rng, n=n, m=m, max_iters=max_iters
        )
        self.box = box
        self.diversity_kernel = (
            diversity_kernel
            if diversity_kernel is not None
            else KernelParams.ones(box.dim)
        )
        self.noise = noise
        self.history: list[np.ndarray] = []
        self._last_history_size = 0

    @property
    def history_before_last(self) -> np.ndarray:
        h = self.history[: self._last_history_size]
        if not h:
            return np.empty((0, self.box.dim))
        return np.array(h)

    def draw(self) -> np.ndarray:
        state = self._inner.state
        if not self.history:
            theta = self._inner.seed_point[0].copy()
        else:
            if 2 * len(state) <= state.m:
                self._inner._refill()
            eta = conditional_variance(
                state.thetas,
                np.array(self.history),
                self.diversity_kernel,
                self.noise,
            )
            j = int(np.argmax(eta))
            theta = state.thetas[j].copy()
            state.thetas = np.delete(state.thetas, j, axis=0)
            state.weights = np.delete(state.weights, j)
        self._last_history_size = len(self.history)
        self.history.append(theta)
        return theta

    def __iter__(self):
        while True:
            yield self.draw()


class KernelLearningSampler:
    """Diverse stream plus the planner-feedback kernel update.

    ``reject`` applies the decay rule using the history as it stood before
    the failed draw (no update on the very first draw of a task, which has
    an empty history). The kernel object is shared with the caller so its
    state can persist across tasks.
    """

    def __init__(self, sampler: DiverseSampler, rate: float = DECAY, frozen: bool = False):
        self.sampler = sampler
        self.rate = rate
        self.frozen = frozen

    @property
    def kernel(self) -> KernelParams:
        return self.sampler.diversity_kernel

    def draw(self) -> np.ndarray:
        return self.sampler.draw()

    def reject(self, theta: np.ndarray) -> None:
        if self.frozen:
            return
        history = self.sampler.history_before_last
        if history.shape[0] == 0:
            return
        self.sampler.diversity_kernel = decay_top_feature(
            self.sampler.diversity_kernel,
            theta,
            history,
            self.rate,
            self.sampler.noise,
        )
