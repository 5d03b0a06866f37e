"""Gaussian-process regression over box-bounded inputs.

The model regresses a scalar score on concatenated (theta, alpha) vectors,
where theta are the sampled action parameters and alpha is the conditioning
context. Everything is built on an anisotropic squared-exponential kernel

    k(x, x') = signal_variance * exp(-sum_d (l_d * (x_d - x'_d))^2)

parameterized by per-dimension *inverse* lengthscales ``l`` (l_d = 0 makes
dimension d invisible to the kernel). Posterior inference uses a cached
Cholesky factorization of the noisy kernel matrix; hyperparameters are fit
by multi-restart L-BFGS on the log marginal likelihood in log-parameter
space.

Models are immutable after construction and safe to share across threads;
datasets are grown functionally via :meth:`Dataset.extended`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

# Diagonal jitter schedule: always start at 1e-10 and escalate x10 until the
# factorization succeeds or the cap is hit.
JITTER_START = 1e-10
JITTER_MAX = 1e-4

# Log-space box constraints for all fitted hyperparameters.
PARAM_LOWER = 1e-3
PARAM_UPPER = 1e3

_LOG2PI = math.log(2.0 * math.pi)


class NotPositiveDefiniteError(RuntimeError):
    """Kernel matrix stayed non-PD after the full jitter schedule."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned hyper-rectangle, the domain of sampled parameters."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1 or lower.size < 1:
            raise ValueError("bounds must be 1-d arrays of equal length")
        if not np.all(lower < upper):
            raise ValueError("need lower[d] < upper[d] for every dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean membership for an (n, dim) array (or a single point)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def clip(self, points: np.ndarray) -> np.ndarray:
        return np.clip(points, self.lower, self.upper)

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    @staticmethod
    def unit(dim: int) -> "Box":
        return Box(np.zeros(dim), np.ones(dim))


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential kernel hyperparameters.

    ``inv_lengthscales`` has one nonnegative entry per input dimension; an
    entry of zero removes that dimension from the distance computation.
    """

    inv_lengthscales: np.ndarray
    signal_variance: float = 1.0

    def __post_init__(self):
        l = np.atleast_1d(np.asarray(self.inv_lengthscales, dtype=float))
        if np.any(l < 0):
            raise ValueError("inverse lengthscales must be nonnegative")
        if not self.signal_variance > 0:
            raise ValueError("signal variance must be positive")
        object.__setattr__(self, "inv_lengthscales", l)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))

    @property
    def dim(self) -> int:
        return self.inv_lengthscales.size

    @staticmethod
    def ones(dim: int, signal_variance: float = 1.0) -> "KernelParams":
        return KernelParams(np.ones(dim), signal_variance)


def kernel_eval(x: np.ndarray, x2: np.ndarray, params: KernelParams) -> float:
    """Evaluate the kernel between two single points."""
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.size != x2.size or x.size != params.dim:
        raise ValueError(
            f"dimension mismatch: {x.size}, {x2.size} vs kernel dim {params.dim}"
        )
    r = params.inv_lengthscales * (x - x2)
    return params.signal_variance * math.exp(-float(np.dot(r, r)))


def kernel_matrix(
    X: np.ndarray, X2: np.ndarray, params: KernelParams
) -> np.ndarray:
    """Kernel cross-matrix of shape (len(X), len(X2))."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X.shape[1] != params.dim or X2.shape[1] != params.dim:
        raise ValueError("input dimension does not match kernel dimension")
    a = X * params.inv_lengthscales
    b = X2 * params.inv_lengthscales
    sq = (
        np.sum(a * a, axis=1)[:, None]
        - 2.0 * a @ b.T
        + np.sum(b * b, axis=1)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    return params.signal_variance * np.exp(-sq)


@dataclass(frozen=True)
class Dataset:
    """Observed ((theta, alpha), y) rows with a shared observation-noise scale."""

    thetas: np.ndarray
    alphas: np.ndarray
    y: np.ndarray
    noise_sd: float

    def __post_init__(self):
        thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        alphas = np.asarray(self.alphas, dtype=float)
        if alphas.ndim == 1:
            alphas = alphas.reshape(len(alphas), -1) if alphas.size else alphas.reshape(0, 0)
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if thetas.shape[0] != y.shape[0]:
            raise ValueError("thetas and y must have the same number of rows")
        if alphas.shape[0] != thetas.shape[0]:
            raise ValueError("alphas and thetas must have the same number of rows")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "noise_sd", float(self.noise_sd))

    @staticmethod
    def empty(d_theta: int, d_alpha: int, noise_sd: float) -> "Dataset":
        return Dataset(
            np.empty((0, d_theta)), np.empty((0, d_alpha)), np.empty(0), noise_sd
        )

    def __len__(self) -> int:
        return self.thetas.shape[0]

    @property
    def d_theta(self) -> int:
        return self.thetas.shape[1]

    @property
    def d_alpha(self) -> int:
        return self.alphas.shape[1]

    @property
    def inputs(self) -> np.ndarray:
        """Stacked (theta, alpha) design matrix fed to the kernel."""
        if self.d_alpha == 0:
            return self.thetas
        return np.hstack([self.thetas, self.alphas])

    def extended(self, theta: np.ndarray, alpha: np.ndarray, y: float) -> "Dataset":
        """New dataset with one extra row appended."""
        theta = np.asarray(theta, dtype=float).reshape(1, -1)
        alpha = np.asarray(alpha, dtype=float).reshape(1, -1)
        return Dataset(
            np.vstack([self.thetas, theta]),
            np.vstack([self.alphas, alpha]) if self.d_alpha else self.alphas[:0],
            np.append(self.y, float(y)),
            self.noise_sd,
        )


def with_context(thetas: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Tile a fixed context onto a batch of thetas to form model inputs."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.size == 0:
        return thetas
    return np.hstack([thetas, np.tile(alpha, (thetas.shape[0], 1))])


def _chol_with_jitter(A: np.ndarray) -> tuple[np.ndarray, float]:
    jitter = JITTER_START
    eye = np.eye(A.shape[0])
    while jitter <= JITTER_MAX * (1 + 1e-12):
        try:
            L = np.linalg.cholesky(A + jitter * eye)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NotPositiveDefiniteError(
        f"kernel matrix not positive definite up to jitter {JITTER_MAX:g}"
    )


class PosteriorModel:
    """Fitted GP posterior serving mean/sd queries at new inputs.

    Holds the dataset, kernel hyperparameters, a fitted observation-noise
    scale and the cached Cholesky factor of (K + noise^2 I + jitter I).
    Instances are immutable after construction.
    """

    def __init__(
        self,
        dataset: Dataset,
        kernel: KernelParams,
        noise_sd: float | None = None,
    ):
        if kernel.dim != dataset.d_theta + dataset.d_alpha:
            raise ValueError("kernel dimension must match d_theta + d_alpha")
        self.dataset = dataset
        self.kernel = kernel
        self.noise_sd = float(noise_sd if noise_sd is not None else dataset.noise_sd)
        self._X = dataset.inputs
        if len(dataset) == 0:
            self._L = None
            self._weights = None
            self.jitter = 0.0
        else:
            K = kernel_matrix(self._X, self._X, kernel)
            A = K + (self.noise_sd**2) * np.eye(len(dataset))
            self._L, self.jitter = _chol_with_jitter(A)
            z = solve_triangular(self._L, dataset.y, lower=True, check_finite=False)
            self._weights = solve_triangular(
                self._L.T, z, lower=False, check_finite=False
            )

    @property
    def d_theta(self) -> int:
        return self.dataset.d_theta

    def predict(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation at each row of ``X``.

        With no observations this is the prior: mean 0, sd sqrt(signal_variance).
        Negative round-off in the variance is clamped at zero.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m = X.shape[0]
        if self._L is None:
            return np.zeros(m), np.full(m, math.sqrt(self.kernel.signal_variance))
        k_star = kernel_matrix(self._X, X, self.kernel)
        mean = k_star.T @ self._weights
        v = solve_triangular(self._L, k_star, lower=True, check_finite=False)
        var = self.kernel.signal_variance - np.sum(v * v, axis=0)
        np.maximum(var, 0.0, out=var)
        return mean, np.sqrt(var)

    def predict_point(self, x: np.ndarray) -> tuple[float, float]:
        mean, sd = self.predict(np.asarray(x, dtype=float).reshape(1, -1))
        return float(mean[0]), float(sd[0])

    def joint(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean vector and full covariance matrix at ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        prior = kernel_matrix(X, X, self.kernel)
        if self._L is None:
            return np.zeros(X.shape[0]), prior
        k_star = kernel_matrix(self._X, X, self.kernel)
        mean = k_star.T @ self._weights
        v = solve_triangular(self._L, k_star, lower=True, check_finite=False)
        cov = prior - v.T @ v
        return mean, 0.5 * (cov + cov.T)

    def predict_thetas(
        self, thetas: np.ndarray, alpha: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Predict at a batch of thetas under a fixed context."""
        return self.predict(with_context(thetas, alpha))


def _squared_diffs(X: np.ndarray) -> np.ndarray:
    # (dim, n, n) per-dimension squared differences, reused across LML calls.
    d = X[:, None, :] - X[None, :, :]
    return np.ascontiguousarray(np.moveaxis(d * d, -1, 0))


def _pack(kernel: KernelParams, noise_sd: float) -> np.ndarray:
    l = np.clip(kernel.inv_lengthscales, PARAM_LOWER, PARAM_UPPER)
    return np.log(
        np.concatenate([l, [kernel.signal_variance, noise_sd]])
    )


def _unpack(p: np.ndarray) -> tuple[KernelParams, float]:
    vals = np.exp(p)
    return KernelParams(vals[:-2], float(vals[-2])), float(vals[-1])


def _lml_terms(p: np.ndarray, X: np.ndarray, y: np.ndarray, sqd: np.ndarray):
    dim = X.shape[1]
    l = np.exp(p[:dim])
    sv = math.exp(p[dim])
    noise = math.exp(p[dim + 1])
    n = len(y)
    sq = np.tensordot(l * l, sqd, axes=1)
    K = sv * np.exp(-sq)
    A = K + (noise**2) * np.eye(n)
    L, _ = _chol_with_jitter(A)
    z = solve_triangular(L, y, lower=True, check_finite=False)
    alpha = solve_triangular(L.T, z, lower=False, check_finite=False)
    lml = -0.5 * float(y @ alpha) - float(np.sum(np.log(np.diag(L)))) - 0.5 * n * _LOG2PI
    return lml, (l, sv, noise, K, L, alpha)


def log_marginal_likelihood(
    dataset: Dataset, params: KernelParams, noise_sd: float | None = None
) -> float:
    """log N(y | 0, K + noise^2 I) of the dataset under the given kernel."""
    if len(dataset) == 0:
        raise ValueError("log marginal likelihood needs a non-empty dataset")
    noise = noise_sd if noise_sd is not None else dataset.noise_sd
    X = dataset.inputs
    p = np.log(
        np.concatenate(
            [
                np.maximum(params.inv_lengthscales, 1e-300),
                [params.signal_variance, noise],
            ]
        )
    )
    lml, _ = _lml_terms(p, X, dataset.y, _squared_diffs(X))
    return lml


def lml_value_and_grad(
    dataset: Dataset, log_params: np.ndarray, sqd: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """LML and its gradient with respect to the packed log-hyperparameters.

    ``log_params`` holds [log l_1..l_D, log signal_variance, log noise_sd].
    """
    X = dataset.inputs
    if sqd is None:
        sqd = _squared_diffs(X)
    lml, (l, sv, noise, K, L, alpha) = _lml_terms(log_params, X, dataset.y, sqd)
    Linv = solve_triangular(
        L, np.eye(len(dataset)), lower=True, check_finite=False
    )
    W = Linv.T @ Linv
    M = np.outer(alpha, alpha) - W
    G = M * K
    grad = np.empty_like(log_params)
    dim = X.shape[1]
    for d in range(dim):
        grad[d] = -(l[d] ** 2) * float(np.sum(G * sqd[d]))
    grad[dim] = 0.5 * float(np.sum(G))
    grad[dim + 1] = (noise**2) * float(np.trace(M))
    return lml, grad


class GPFit(NamedTuple):
    kernel: KernelParams
    noise_sd: float
    log_marginal: float


def fit_hyperparams(
    dataset: Dataset,
    init: KernelParams,
    restarts: int = 2,
    init_noise: float | None = None,
    rng: np.random.Generator | None = None,
    max_iter: int = 80,
) -> GPFit:
    """Maximize the marginal likelihood over (l, signal_variance, noise_sd).

    Runs L-BFGS-B in log space, box-constrained to [1e-3, 1e3], from the
    given initialization plus ``restarts`` random draws; the best optimum
    found is returned and is never worse than the initialization.
    """
    if len(dataset) < 2:
        raise ValueError("hyperparameter fitting needs at least 2 observations")
    rng = rng if rng is not None else np.random.default_rng(0)
    X = dataset.inputs
    sqd = _squared_diffs(X)
    noise0 = init_noise if init_noise is not None else dataset.noise_sd
    dim = X.shape[1]
    bounds = [(math.log(PARAM_LOWER), math.log(PARAM_UPPER))] * (dim + 2)

    def objective(p):
        try:
            lml, grad = lml_value_and_grad(dataset, p, sqd)
        except NotPositiveDefiniteError:
            return np.inf, np.zeros_like(p)
        return -lml, -grad

    starts = [_pack(init, noise0)]
    for _ in range(restarts):
        l = np.exp(rng.uniform(math.log(0.3), math.log(30.0), size=dim))
        sv = math.exp(rng.uniform(math.log(0.1), math.log(10.0)))
        ns = math.exp(rng.uniform(math.log(0.01), math.log(1.0)))
        starts.append(_pack(KernelParams(l, sv), ns))

    best_p, best_val = None, np.inf
    n_failed = 0
    for p0 in starts:
        try:
            res = minimize(
                objective,
                p0,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": max_iter},
            )
        except NotPositiveDefiniteError:
            n_failed += 1
            continue
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_p = res.fun, res.x
    if best_p is None:
        raise NotPositiveDefiniteError(
            f"hyperparameter fitting failed on all {n_failed} starts"
        )
    # Guard against an optimizer returning a worse point than the init.
    init_val, _ = objective(starts[0])
    if init_val < best_val:
        best_val, best_p = init_val, starts[0]
    kernel, noise = _unpack(best_p)
    return GPFit(kernel, noise, -best_val)
