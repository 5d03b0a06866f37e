"""Simulated backtracking planner over the two-rectangle world.

A task hides an obstacle in front of one of the two feasible rectangles
(fair coin per task). The planner draws parameter samples from a stream,
rejects any sample that is truly infeasible or blocked, and succeeds on the
first sample that is both feasible and clear. A sampler is scored by the
discounted reward gamma^n of the sample that completed the plan, so earlier
successes are worth more.

The closed-form optimum for a sampler that cannot see the obstacle is to
try one rectangle first and the other second: J* = (gamma + gamma^2) / 2.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .diverse import DiverseSampler, KernelLearningSampler
from .gp import Box, KernelParams, PosteriorModel
from .oracles import RECT_A, RECT_B, get_oracle
from .superlevel import AdaptiveSampler, max_mean_sd_ratio, model_membership, relaxed_beta

GAMMA = 0.6
MAX_SAMPLES = 10
TEST_TASKS = 50
TEST_REPEATS = 5

_RECT_ORACLE = get_oracle("rect2d")


@dataclass(frozen=True)
class TaskInstance:
    """One planning problem: context plus a hidden blocked rectangle."""

    seed: int
    blocked_side: str  # "A" or "B"
    alpha: np.ndarray = field(default_factory=lambda: np.empty(0))

    def blocked(self, theta: np.ndarray) -> bool:
        lo, hi = RECT_A if self.blocked_side == "A" else RECT_B
        theta = np.asarray(theta, dtype=float).ravel()
        return bool(np.all((theta >= lo) & (theta <= hi)))

    def feasible(self, theta: np.ndarray) -> bool:
        return bool(_RECT_ORACLE.feasible(theta, self.alpha)[0])


def make_task(seed: int) -> TaskInstance:
    rng = np.random.default_rng(seed)
    side = "A" if rng.uniform() < 0.5 else "B"
    return TaskInstance(seed=seed, blocked_side=side)


def make_task_set(n: int, seed: int) -> list[TaskInstance]:
    root = np.random.default_rng(seed)
    return [make_task(int(s)) for s in root.integers(0, 2**31 - 1, size=n)]


@dataclass
class TaskRecord:
    """Planner trace: which draw (if any) completed the plan."""

    contributes: np.ndarray  # 0/1 per drawn sample, in draw order
    plan_found: bool
    samples_used: int
    wall_time: float


def reward(record: TaskRecord, gamma: float = GAMMA) -> float:
    """Discounted reward sum_n s(n) * gamma^n with n counted from 1."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    powers = gamma ** np.arange(1, len(record.contributes) + 1)
    return float(record.contributes @ powers)


def optimal_reward(gamma: float = GAMMA) -> float:
    """Value of the try-one-rectangle-then-the-other policy."""
    return 0.5 * gamma + 0.5 * gamma**2


def plan_attempt(task: TaskInstance, sampler, max_samples: int = MAX_SAMPLES) -> TaskRecord:
    """Draw until a sample is feasible and unblocked, or the budget runs out.

    Samplers may expose ``reject(theta)`` to receive failure feedback.
    """
    start = time.perf_counter()
    flags = np.zeros(max_samples)
    found = False
    used = 0
    for i in range(max_samples):
        theta = sampler.draw()
        used = i + 1
        if task.feasible(theta) and not task.blocked(theta):
            flags[i] = 1.0
            found = True
            break
        reject = getattr(sampler, "reject", None)
        if reject is not None:
            reject(theta)
    return TaskRecord(
        contributes=flags[:used],
        plan_found=found,
        samples_used=used,
        wall_time=time.perf_counter() - start,
    )


@dataclass(frozen=True)
class SamplerSetup:
    """Everything deterministic shared by every task on one model."""

    model: PosteriorModel
    box: Box
    beta: float
    seed_point: np.ndarray

    @staticmethod
    def from_model(
        model: PosteriorModel,
        box: Box,
        alpha: np.ndarray = np.empty(0),
        rho: float = 0.95,
    ) -> "SamplerSetup":
        rng = np.random.default_rng(0)
        seed_point, z_star = max_mean_sd_ratio(model, alpha, box, rng)
        beta = relaxed_beta(model, alpha, box, rho, z_star=z_star)
        return SamplerSetup(model, box, beta, seed_point)

    def membership(self, alpha: np.ndarray = np.empty(0)):
        return model_membership(self.model, alpha, self.beta)

    def adaptive(self, rng: np.random.Generator) -> AdaptiveSampler:
        return AdaptiveSampler(
            self.membership(), self.box, self.seed_point, rng, beta=self.beta
        )

    def diverse(
        self,
        rng: np.random.Generator,
        kernel: KernelParams | None = None,
    ) -> DiverseSampler:
        return DiverseSampler(
            self.membership(), self.box, self.seed_point, rng, diversity_kernel=kernel
        )


@dataclass
class LearningCurvePoint:
    episode: int
    mean_reward: float
    ci_lo: float
    ci_hi: float
    rep_means: np.ndarray


def _evaluate(
    setup: SamplerSetup,
    tasks: Sequence[TaskInstance],
    make_sampler: Callable[[np.random.Generator], object],
    rng: np.random.Generator,
    gamma: float,
    max_samples: int,
) -> float:
    rewards = []
    for task in tasks:
        sampler = make_sampler(np.random.default_rng(rng.integers(2**63)))
        rewards.append(reward(plan_attempt(task, sampler, max_samples), gamma))
    return float(np.mean(rewards))


def learning_curve(
    setup: SamplerSetup,
    method: str,
    episodes: int,
    seed: int,
    repetitions: int = TEST_REPEATS,
    test_tasks: int = TEST_TASKS,
    gamma: float = GAMMA,
    max_samples: int = MAX_SAMPLES,
    decay: float = 0.3,
) -> list[LearningCurvePoint]:
    """Per-episode held-out reward for a sampler method on the task stream.

    ``method`` is "adaptive" (stateless baseline) or "diverse-lk" (diverse
    stream with online kernel adaptation; the kernel persists across
    episodes within a repetition and is frozen during evaluation). Each
    episode trains on one fresh task and is then scored on the fixed
    held-out test set.
    """
    if method not in ("adaptive", "diverse-lk"):
        raise ValueError(f"unknown learning-curve method: {method!r}")
    tasks = make_task_set(test_tasks, seed=seed + 7_777)
    rep_curves = np.zeros((repetitions, episodes))
    for rep in range(repetitions):
        train_rng = np.random.default_rng([seed, rep, 1])
        eval_rng = np.random.default_rng([seed, rep, 2])
        kernel = KernelParams.ones(setup.box.dim)
        for ep in range(episodes):
            if method == "diverse-lk":
                train_task = make_task(int(train_rng.integers(2**31 - 1)))
                learner = KernelLearningSampler(
                    setup.diverse(
                        np.random.default_rng(train_rng.integers(2**63)), kernel
                    ),
                    rate=decay,
                )
                plan_attempt(train_task, learner, max_samples)
                kernel = learner.kernel

                def make_sampler(r, k=kernel):
                    return KernelLearningSampler(setup.diverse(r, k), frozen=True)

            else:
                def make_sampler(r):
                    return setup.adaptive(r)

            rep_curves[rep, ep] = _evaluate(
                setup, tasks, make_sampler, eval_rng, gamma, max_samples
            )
    points = []
    for ep in range(episodes):
        col = rep_curves[:, ep]
        mean = float(col.mean())
        half = 1.96 * float(col.std(ddof=1)) / math.sqrt(repetitions) if repetitions > 1 else 0.0
        points.append(
            LearningCurvePoint(ep + 1, mean, mean - half, mean + half, col.copy())
        )
    return points
