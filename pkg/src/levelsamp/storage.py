"""File formats: dataset CSV, model/kernel JSON, metrics and curve CSVs.

Every CSV written by the CLI starts with '#'-prefixed provenance lines
carrying the fully resolved run configuration (sorted keys, no timestamps),
so identical configurations produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .gp import Dataset, KernelParams

MODEL_KEYS = {"l", "signal_variance", "noise_sd"}
KERNEL_STATE_KEYS = {"l", "zeta", "epsilon"}


def config_header(config: dict) -> str:
    return "# config: " + json.dumps(config, sort_keys=True) + "\n"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset_csv(path: str | Path, data: Dataset, config: dict | None = None) -> None:
    cols = (
        [f"theta_{i}" for i in range(data.d_theta)]
        + [f"alpha_{i}" for i in range(data.d_alpha)]
        + ["y"]
    )
    buf = io.StringIO()
    if config is not None:
        buf.write(config_header(config))
    buf.write(",".join(cols) + "\n")
    for i in range(len(data)):
        row = list(data.thetas[i]) + list(data.alphas[i]) + [data.y[i]]
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


def read_dataset_csv(path: str | Path, noise_sd: float) -> Dataset:
    lines = [
        ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")
    ]
    reader = csv.reader(lines)
    header = next(reader)
    d_theta = sum(1 for c in header if c.startswith("theta_"))
    d_alpha = sum(1 for c in header if c.startswith("alpha_"))
    if header != (
        [f"theta_{i}" for i in range(d_theta)]
        + [f"alpha_{i}" for i in range(d_alpha)]
        + ["y"]
    ):
        raise ValueError(f"unrecognized dataset columns: {header}")
    rows = [[float(v) for v in r] for r in reader if r]
    arr = np.array(rows, dtype=float).reshape(len(rows), d_theta + d_alpha + 1)
    return Dataset(
        arr[:, :d_theta], arr[:, d_theta : d_theta + d_alpha], arr[:, -1], noise_sd
    )


def write_model_json(
    path: str | Path, kernel: KernelParams, noise_sd: float
) -> None:
    payload = {
        "l": [float(v) for v in kernel.inv_lengthscales],
        "signal_variance": float(kernel.signal_variance),
        "noise_sd": float(noise_sd),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def read_model_json(path: str | Path) -> tuple[KernelParams, float]:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or set(payload) != MODEL_KEYS:
        raise ValueError(
            f"model file {path} must contain exactly the keys {sorted(MODEL_KEYS)}"
        )
    return (
        KernelParams(np.asarray(payload["l"], dtype=float), payload["signal_variance"]),
        float(payload["noise_sd"]),
    )


def write_kernel_state_json(
    path: str | Path, inv_lengthscales, zeta: float, epsilon: float
) -> None:
    payload = {
        "l": [float(v) for v in inv_lengthscales],
        "zeta": float(zeta),
        "epsilon": float(epsilon),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def read_kernel_state_json(path: str | Path) -> tuple[np.ndarray, float, float]:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"kernel state file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or set(payload) != KERNEL_STATE_KEYS:
        raise ValueError(
            f"kernel state file {path} must contain exactly the keys {sorted(KERNEL_STATE_KEYS)}"
        )
    return np.asarray(payload["l"], dtype=float), float(payload["zeta"]), float(payload["epsilon"])


def write_metrics_csv(path: str | Path, cells, config: dict) -> None:
    buf = io.StringIO()
    buf.write(config_header(config))
    buf.write("oracle,sampler,metric,mean,sd,failures\n")
    for c in cells:
        mean = "" if c.mean is None else _fmt(c.mean)
        sd = "" if c.sd is None else _fmt(c.sd)
        buf.write(f"{c.oracle},{c.sampler},{c.metric},{mean},{sd},{c.failures}\n")
    Path(path).write_text(buf.getvalue())


def write_curve_csv(path: str | Path, points, config: dict) -> None:
    buf = io.StringIO()
    buf.write(config_header(config))
    buf.write("episode,mean_J,ci_lo,ci_hi\n")
    for p in points:
        buf.write(
            f"{p.episode},{_fmt(p.mean_reward)},{_fmt(p.ci_lo)},{_fmt(p.ci_hi)}\n"
        )
    Path(path).write_text(buf.getvalue())


def write_samples_csv(
    path: str | Path,
    thetas: np.ndarray,
    mu: np.ndarray,
    sigma: np.ndarray,
    margin: np.ndarray,
    config: dict,
    running_diversity: np.ndarray | None = None,
) -> None:
    d = thetas.shape[1]
    cols = [f"theta_{i}" for i in range(d)] + ["mu", "sigma", "margin"]
    if running_diversity is not None:
        cols.append("D_S")
    buf = io.StringIO()
    buf.write(config_header(config))
    buf.write(",".join(cols) + "\n")
    for i in range(len(thetas)):
        row = list(thetas[i]) + [mu[i], sigma[i], margin[i]]
        if running_diversity is not None:
            row.append(running_diversity[i])
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())
