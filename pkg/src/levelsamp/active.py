"""Straddle-acquisition active learning of the feasibility boundary.

The loop repeatedly fits the score model, picks the parameter vector that
maximizes -|mu| + c * sigma (points near the estimated zero crossing or
with large uncertainty), evaluates the oracle there, and appends the new
observation. With the default coefficient 1.96, a point whose acquisition
value is negative has under a 5 percent two-sided chance of crossing zero
under the model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .boxopt import maximize_box
from .gp import Box, Dataset, KernelParams, PosteriorModel, fit_hyperparams

COLD_START_QUERIES = 3


class ScoreOracle:
    """Noisy score evaluator with a call counter.

    Wraps a deterministic score function g(theta, alpha); evaluations add
    Gaussian noise drawn from the oracle's own generator, so results are
    reproducible given the construction seed and call order.
    """

    def __init__(
        self,
        g: Callable[[np.ndarray, np.ndarray], float],
        noise_sd: float,
        rng: np.random.Generator,
    ):
        self._g = g
        self.noise_sd = float(noise_sd)
        self._rng = rng
        self.evaluation_count = 0

    def evaluate(self, theta: np.ndarray, alpha: np.ndarray) -> float:
        self.evaluation_count += 1
        value = float(self._g(np.asarray(theta, float), np.asarray(alpha, float)))
        if self.noise_sd > 0:
            value += self.noise_sd * float(self._rng.standard_normal())
        return value


@dataclass(frozen=True)
class AcquisitionConfig:
    straddle_coeff: float = 1.96
    budget: int = 1
    n_seeds: int = 64
    line_iters: int = 50
    refine_top: int = 4
    fit_restarts: int = 1

    def __post_init__(self):
        if not self.straddle_coeff > 0:
            raise ValueError("straddle coefficient must be positive")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")


def straddle(
    model: PosteriorModel,
    thetas: np.ndarray,
    alpha: np.ndarray,
    coeff: float = 1.96,
) -> np.ndarray:
    """Acquisition value -|mu| + coeff * sigma for a batch of thetas."""
    mean, sd = model.predict_thetas(thetas, alpha)
    return -np.abs(mean) + coeff * sd


def maximize_acquisition(
    model: PosteriorModel,
    alpha: np.ndarray,
    box: Box,
    cfg: AcquisitionConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    theta, _ = maximize_box(
        lambda T: straddle(model, T, alpha, cfg.straddle_coeff),
        box,
        rng,
        n_seeds=cfg.n_seeds,
        line_iters=cfg.line_iters,
        refine_top=cfg.refine_top,
    )
    return theta


def active_learn(
    oracle: ScoreOracle,
    alpha: np.ndarray,
    box: Box,
    data: Dataset,
    cfg: AcquisitionConfig,
    rng: np.random.Generator,
) -> Dataset:
    """Run the acquisition loop for ``cfg.budget`` evaluations.

    Hyperparameters are refit before every acquisition step. Starting from
    an empty dataset, the first few queries are uniform in the box (the
    acquisition surface is constant under the prior). Returns the input
    dataset plus exactly ``cfg.budget`` new rows.
    """
    alpha = np.asarray(alpha, dtype=float).ravel()
    cold = COLD_START_QUERIES if len(data) == 0 else 0
    kernel = KernelParams.ones(data.d_theta + data.d_alpha)
    noise = data.noise_sd
    for t in range(cfg.budget):
        if t < cold or len(data) == 0:
            theta = box.sample_uniform(1, rng)[0]
        else:
            fit = fit_hyperparams(
                data, kernel, restarts=cfg.fit_restarts, init_noise=noise, rng=rng
            )
            kernel, noise = fit.kernel, fit.noise_sd
            model = PosteriorModel(data, kernel, noise)
            theta = maximize_acquisition(model, alpha, box, cfg, rng)
        y = oracle.evaluate(theta, alpha)
        data = data.extended(theta, alpha, y)
    return data


def fit_model(
    data: Dataset,
    restarts: int = 2,
    rng: np.random.Generator | None = None,
) -> PosteriorModel:
    """Fit hyperparameters from scratch and build the posterior."""
    fit = fit_hyperparams(
        data,
        KernelParams.ones(data.d_theta + data.d_alpha),
        restarts=restarts,
        rng=rng if rng is not None else np.random.default_rng(0),
    )
    return PosteriorModel(data, fit.kernel, fit.noise_sd)


def uniform_learn(
    oracle: ScoreOracle,
    alpha: np.ndarray,
    box: Box,
    data: Dataset,
    budget: int,
    rng: np.random.Generator,
) -> Dataset:
    """Baseline that replaces the acquisition argmax with uniform draws.

    Query locations do not depend on the model, so intermediate refits are
    skipped; fit the returned dataset once when a model is needed.
    """
    alpha = np.asarray(alpha, dtype=float).ravel()
    for _ in range(budget):
        theta = box.sample_uniform(1, rng)[0]
        data = data.extended(theta, alpha, oracle.evaluate(theta, alpha))
    return data
